//! Argument-vector templates for external container CLIs.
//!
//! Placeholders: `{image}` and `{name}` substitute inside a token;
//! `{volumes}`, `{ports}` and `{cmd}` must be whole tokens and expand to
//! zero or more arguments. Rendering is a single pass, so substituted
//! values are never re-expanded, and the result is an argument vector
//! handed straight to the process spawner with no shell in between.

use super::EngineError;
use crate::catalog::{PortSpec, VolumeMode, VolumeSpec};

const SCALARS: [&str; 2] = ["image", "name"];
const LISTS: [&str; 3] = ["volumes", "ports", "cmd"];

/// Values for one rendering.
#[derive(Debug, Clone, Default)]
pub struct TemplateVars<'a> {
    pub image: &'a str,
    pub name: &'a str,
    pub volumes: Vec<String>,
    pub ports: Vec<String>,
    pub cmd: &'a [String],
}

/// `host:container`, with `:ro` for read-only binds.
pub fn volume_binding(v: &VolumeSpec) -> String {
    match v.mode {
        VolumeMode::ReadOnly => format!("{}:{}:ro", v.host_path, v.container_path),
        VolumeMode::ReadWrite => format!("{}:{}", v.host_path, v.container_path),
    }
}

pub fn volume_args(flag: Option<&str>, volumes: &[VolumeSpec]) -> Vec<String> {
    match flag {
        Some(flag) => volumes.iter().flat_map(|v| [flag.to_string(), volume_binding(v)]).collect(),
        None => Vec::new(),
    }
}

pub fn port_args(flag: Option<&str>, ports: &[PortSpec]) -> Vec<String> {
    match flag {
        Some(flag) => {
            ports.iter().flat_map(|p| [flag.to_string(), format!("{}:{}", p.host_port, p.container_port)]).collect()
        }
        None => Vec::new(),
    }
}

/// Byte ranges and names of `{ident}` placeholders in a token.
fn placeholders(token: &str) -> Vec<(usize, usize, &str)> {
    let bytes = token.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_lowercase() || bytes[j] == b'_') {
                j += 1;
            }
            if j > i + 1 && j < bytes.len() && bytes[j] == b'}' {
                out.push((i, j + 1, &token[i + 1..j]));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Rejects unknown placeholders and list placeholders embedded in a token.
pub fn check_template(template: &[String]) -> Result<(), EngineError> {
    if template.is_empty() {
        return Err(EngineError::Template("empty template".into()));
    }
    for token in template {
        for (start, end, name) in placeholders(token) {
            if LISTS.contains(&name) {
                if start != 0 || end != token.len() {
                    return Err(EngineError::Template(format!(
                        "`{{{name}}}` must be a whole argument, found in `{token}`"
                    )));
                }
            } else if !SCALARS.contains(&name) {
                return Err(EngineError::Template(format!("unknown placeholder `{{{name}}}` in `{token}`")));
            }
        }
    }
    Ok(())
}

pub fn render(template: &[String], vars: &TemplateVars<'_>) -> Result<Vec<String>, EngineError> {
    check_template(template)?;
    let mut argv = Vec::with_capacity(template.len() + vars.cmd.len());
    for token in template {
        match token.as_str() {
            "{volumes}" => argv.extend(vars.volumes.iter().cloned()),
            "{ports}" => argv.extend(vars.ports.iter().cloned()),
            "{cmd}" => argv.extend(vars.cmd.iter().cloned()),
            _ => {
                let mut out = String::with_capacity(token.len());
                let mut last = 0;
                for (start, end, name) in placeholders(token) {
                    out.push_str(&token[last..start]);
                    out.push_str(if name == "image" { vars.image } else { vars.name });
                    last = end;
                }
                out.push_str(&token[last..]);
                argv.push(out);
            }
        }
    }
    Ok(argv)
}
