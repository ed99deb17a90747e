//! Registers the DfAnalyzer stack and prints dependency closures and the
//! default provenance service.

mod common;

use provforge::catalog::{CatalogError, ImageId};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let cat = common::denseed_catalog(dir.path());

    for img in cat.images().unwrap() {
        let closure = cat.resolve_image_closure(&img.id).unwrap();
        let names: Vec<String> = closure.iter().map(ImageId::to_string).collect();
        println!("{:<16} {}", img.id.to_string(), names.join(" -> "));
    }

    let default = cat.default_prov_service().unwrap().unwrap();
    println!("default service: {} ({})", default.service_name, default.image);

    // Same name and tag, different digest: refused unless bumped.
    let mut rebuilt = cat.image(&"DenseED:1.0".parse().unwrap()).unwrap().unwrap().record;
    rebuilt.digest = provforge::catalog::sha256_digest(b"rebuilt");
    match cat.register_image(rebuilt.clone()) {
        Err(e @ CatalogError::ConflictingDigest { .. }) => println!("refused: {e}"),
        other => panic!("{other:?}"),
    }
    cat.register_image_with(rebuilt, true).unwrap();
    let current = cat.image(&"DenseED:1.0".parse().unwrap()).unwrap().unwrap();
    println!("DenseED:1.0 is now definition v{}", current.record.definition_version);
}
