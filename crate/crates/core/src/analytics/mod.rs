//! Cross-strategy comparison of recorded runs: summary statistics,
//! classical one-way ANOVA and Bonferroni-corrected pairwise t-tests.
//!
//! ANOVA accepts raw durations or `(mean, std, n)` summaries, so published
//! summaries can be analysed without the underlying timings. Variances are
//! pooled (equal-variance model) in both the F test and the post-hoc.

pub mod special;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::record::RunRecord;
use crate::workflow::Strategy;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("group `{0}` has no runs")]
    EmptyGroup(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("runs mix {0}")]
    MixedRuns(String),
}

type Result<T> = std::result::Result<T, AnalyticsError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySample {
    pub strategy: Strategy,
    pub environment_label: String,
    /// Run durations in minutes.
    pub durations: Vec<f64>,
}

impl StrategySample {
    pub fn summary(&self) -> GroupSummary {
        let n = self.durations.len();
        let mean = self.durations.iter().sum::<f64>() / n as f64;
        let var =
            if n > 1 { self.durations.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        GroupSummary { label: self.strategy.as_str().to_string(), mean, std: var.sqrt(), n }
    }
}

/// Mean and sample standard deviation (n − 1 denominator) of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl GroupSummary {
    /// Human label: the strategy's display name when `label` is a strategy.
    pub fn display_label(&self) -> String {
        self.label.parse::<Strategy>().map(|s| s.label().to_string()).unwrap_or_else(|_| self.label.clone())
    }
}

/// Groups runs by strategy (in canonical strategy order), taking each run's
/// end-to-end duration in minutes.
pub fn summarize_runs(runs: &[RunRecord]) -> Result<Vec<StrategySample>> {
    let first = runs.first().ok_or_else(|| AnalyticsError::EmptyGroup("all strategies".into()))?;
    let mut by_strategy: BTreeMap<usize, StrategySample> = BTreeMap::new();
    for r in runs {
        if r.workflow_name != first.workflow_name {
            return Err(AnalyticsError::MixedRuns(format!(
                "workflows {} and {}",
                first.workflow_name, r.workflow_name
            )));
        }
        if r.environment_label != first.environment_label {
            return Err(AnalyticsError::MixedRuns(format!(
                "environments {} and {}",
                first.environment_label, r.environment_label
            )));
        }
        let minutes = r.duration_minutes();
        if minutes.is_nan() || minutes <= 0.0 {
            return Err(AnalyticsError::DegenerateInput(format!("run {} has no positive duration", r.run_id)));
        }
        let key = Strategy::ALL.iter().position(|s| *s == r.strategy).expect("strategy in ALL");
        by_strategy
            .entry(key)
            .or_insert_with(|| StrategySample {
                strategy: r.strategy,
                environment_label: r.environment_label.clone(),
                durations: Vec::new(),
            })
            .durations
            .push(minutes);
    }
    Ok(by_strategy.into_values().collect())
}

fn ser_real<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_infinite() && *x > 0.0 {
        s.serialize_str("+inf")
    } else if x.is_infinite() {
        s.serialize_str("-inf")
    } else {
        s.serialize_f64(*x)
    }
}

fn de_real<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Real {
        Num(f64),
        Text(String),
    }
    match Real::deserialize(d)? {
        Real::Num(x) => Ok(x),
        Real::Text(t) if t == "+inf" => Ok(f64::INFINITY),
        Real::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
        Real::Text(t) => Err(serde::de::Error::custom(format!("expected a number, found `{t}`"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    /// `+inf` when within-group variance is zero but means differ.
    #[serde(serialize_with = "ser_real", deserialize_with = "de_real")]
    pub f_statistic: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub alpha: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject_null: bool,
    pub group_labels: Vec<String>,
    pub group_means: Vec<f64>,
    pub group_stds: Vec<f64>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AnalyticsError::DegenerateInput(format!("alpha must be in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn check_groups(groups: &[GroupSummary]) -> Result<()> {
    if groups.len() < 2 {
        return Err(AnalyticsError::DegenerateInput("at least two groups are required".into()));
    }
    for g in groups {
        if g.n == 0 {
            return Err(AnalyticsError::EmptyGroup(g.label.clone()));
        }
        if g.n < 2 {
            return Err(AnalyticsError::DegenerateInput(format!("group `{}` needs at least two values", g.label)));
        }
        if !g.mean.is_finite() || !g.std.is_finite() || g.std < 0.0 {
            return Err(AnalyticsError::DegenerateInput(format!("group `{}` has a non-finite mean or std", g.label)));
        }
    }
    Ok(())
}

fn decide(groups: &[GroupSummary], ss_between: f64, ss_within: f64, alpha: f64) -> AnovaResult {
    let k = groups.len();
    let total: usize = groups.iter().map(|g| g.n).sum();
    let (dfb, dfw) = (k - 1, total - k);
    let critical_value = special::f_critical(alpha, dfb as f64, dfw as f64);
    let ms_within = ss_within / dfw as f64;
    let (f, p) = if ms_within > 0.0 {
        let f = (ss_between / dfb as f64) / ms_within;
        (f, special::f_sf(f, dfb as f64, dfw as f64))
    } else if ss_between > 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (0.0, 1.0)
    };
    AnovaResult {
        f_statistic: f,
        df_between: dfb,
        df_within: dfw,
        alpha,
        critical_value,
        p_value: p,
        reject_null: f > critical_value,
        group_labels: groups.iter().map(|g| g.label.clone()).collect(),
        group_means: groups.iter().map(|g| g.mean).collect(),
        group_stds: groups.iter().map(|g| g.std).collect(),
    }
}

/// ANOVA from summaries: SS_between = Σ nᵢ(x̄ᵢ − x̄)², SS_within = Σ (nᵢ − 1)sᵢ².
pub fn anova_one_way(groups: &[GroupSummary], alpha: f64) -> Result<AnovaResult> {
    check_alpha(alpha)?;
    check_groups(groups)?;
    let total: usize = groups.iter().map(|g| g.n).sum();
    let grand = groups.iter().map(|g| g.n as f64 * g.mean).sum::<f64>() / total as f64;
    let ssb = groups.iter().map(|g| g.n as f64 * (g.mean - grand).powi(2)).sum();
    let ssw = groups.iter().map(|g| (g.n - 1) as f64 * g.std * g.std).sum();
    Ok(decide(groups, ssb, ssw, alpha))
}

/// ANOVA over raw durations, summing squared deviations point by point.
pub fn anova_from_samples(samples: &[StrategySample], alpha: f64) -> Result<AnovaResult> {
    check_alpha(alpha)?;
    for s in samples {
        if s.durations.is_empty() {
            return Err(AnalyticsError::EmptyGroup(s.strategy.as_str().into()));
        }
        if s.durations.iter().any(|d| !d.is_finite()) {
            return Err(AnalyticsError::DegenerateInput(format!("non-finite duration in `{}`", s.strategy)));
        }
    }
    let groups: Vec<GroupSummary> = samples.iter().map(StrategySample::summary).collect();
    check_groups(&groups)?;
    let all: Vec<f64> = samples.iter().flat_map(|s| s.durations.iter().copied()).collect();
    let grand = all.iter().sum::<f64>() / all.len() as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for (s, g) in samples.iter().zip(&groups) {
        for x in &s.durations {
            ssb += (g.mean - grand).powi(2);
            ssw += (x - g.mean).powi(2);
        }
    }
    Ok(decide(&groups, ssb, ssw, alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub pair: (String, String),
    #[serde(serialize_with = "ser_real", deserialize_with = "de_real")]
    pub t_statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub per_test_alpha: f64,
    pub significant: bool,
}

/// All-pairs t-tests on the pooled within-group mean square, each judged at
/// `family_alpha / pairs`.
pub fn bonferroni_posthoc(groups: &[GroupSummary], family_alpha: f64) -> Result<Vec<PairwiseComparison>> {
    check_alpha(family_alpha)?;
    check_groups(groups)?;
    let k = groups.len();
    let total: usize = groups.iter().map(|g| g.n).sum();
    let df = total - k;
    let msw = groups.iter().map(|g| (g.n - 1) as f64 * g.std * g.std).sum::<f64>() / df as f64;
    let pairs = k * (k - 1) / 2;
    let per_test_alpha = family_alpha / pairs as f64;
    let mut out = Vec::with_capacity(pairs);
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (&groups[i], &groups[j]);
            let diff = a.mean - b.mean;
            let se = (msw * (1.0 / a.n as f64 + 1.0 / b.n as f64)).sqrt();
            let t = if se > 0.0 {
                diff / se
            } else if diff == 0.0 {
                0.0
            } else {
                diff.signum() * f64::INFINITY
            };
            let p = special::t_two_sided_p(t, df as f64);
            out.push(PairwiseComparison {
                pair: (a.label.clone(), b.label.clone()),
                t_statistic: t,
                df,
                p_value: p,
                per_test_alpha,
                significant: p < per_test_alpha,
            });
        }
    }
    Ok(out)
}

/// Summary, ANOVA and (for three or more groups) post-hoc in one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub workflow: String,
    pub environment: String,
    pub groups: Vec<GroupSummary>,
    pub anova: AnovaResult,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub posthoc: Vec<PairwiseComparison>,
}

impl AnalysisReport {
    pub fn from_summaries(workflow: &str, environment: &str, groups: Vec<GroupSummary>, alpha: f64) -> Result<Self> {
        let anova = anova_one_way(&groups, alpha)?;
        let posthoc = if groups.len() >= 3 { bonferroni_posthoc(&groups, alpha)? } else { Vec::new() };
        Ok(Self { workflow: workflow.into(), environment: environment.into(), groups, anova, posthoc })
    }

    pub fn conclusion(&self) -> &'static str {
        if self.anova.reject_null {
            "significant difference"
        } else {
            "no significant difference"
        }
    }

    /// Plain-text table: one row per strategy, then the tests.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let width = self.groups.iter().map(|g| g.display_label().len()).max().unwrap_or(8).max(8);
        let _ = writeln!(s, "Execution time (minutes), {} on {}", self.workflow, self.environment);
        let _ = writeln!(s, "{:<width$}  {:>10}  {:>8}  {:>3}", "Strategy", "mean", "std", "n");
        for g in &self.groups {
            let _ = writeln!(s, "{:<width$}  {:>10.3}  {:>8.3}  {:>3}", g.display_label(), g.mean, g.std, g.n);
        }
        let a = &self.anova;
        let _ = writeln!(
            s,
            "one-way ANOVA: F({}, {}) = {:.4}, p = {:.4}, critical F = {:.4} at alpha = {}: {}",
            a.df_between,
            a.df_within,
            a.f_statistic,
            a.p_value,
            a.critical_value,
            a.alpha,
            self.conclusion()
        );
        if let Some(first) = self.posthoc.first() {
            let _ = writeln!(s, "Bonferroni post-hoc, per-test alpha = {:.4}:", first.per_test_alpha);
            let label =
                |l: &str| l.parse::<Strategy>().map(|x| x.label().to_string()).unwrap_or_else(|_| l.to_string());
            for c in &self.posthoc {
                let _ = writeln!(
                    s,
                    "  {} vs {}: t({}) = {:.4}, p = {:.5}, {}",
                    label(&c.pair.0),
                    label(&c.pair.1),
                    c.df,
                    c.t_statistic,
                    c.p_value,
                    if c.significant { "significant" } else { "not significant" }
                );
            }
        }
        s
    }
}
