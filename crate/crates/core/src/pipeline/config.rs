use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::annotate::AnnotatorSpec;
use crate::env::{EnvFamily, GenConfig};
use crate::lfm::FeedbackHyper;
use crate::policy::PolicyHyper;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bc,
    Actpred,
    Dagger,
    Lfm,
    LfmAdapt,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Bc => "bc",
            Method::Actpred => "actpred",
            Method::Dagger => "dagger",
            Method::Lfm => "lfm",
            Method::LfmAdapt => "lfm_adapt",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bc" => Ok(Method::Bc),
            "actpred" => Ok(Method::Actpred),
            "dagger" => Ok(Method::Dagger),
            "lfm" => Ok(Method::Lfm),
            "lfm_adapt" => Ok(Method::LfmAdapt),
            other => Err(PipelineError::Config(format!("unknown method `{other}`"))),
        }
    }
}

fn default_count() -> usize {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub family: EnvFamily,
    #[serde(default = "default_count")]
    pub count: usize,
    /// Test-pool size; defaults to a third of `count`.
    #[serde(default)]
    pub test_count: Option<usize>,
    /// Instance-generation seed; defaults to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub max_steps: Option<u32>,
}

impl EnvConfig {
    pub fn gen_config(&self, run_seed: u64) -> GenConfig {
        let mut g = GenConfig::new(self.family, self.count, self.seed.unwrap_or(run_seed));
        g.test_count = self.test_count;
        g.max_steps = self.max_steps;
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    /// Annotator output tokens available to the method.
    pub tokens: u64,
    pub window_len: usize,
    /// Upper bound on annotated windows.
    pub window_count: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            tokens: 100_000,
            window_len: 20,
            window_count: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectConfig {
    /// Sampling temperature of data-collection rollouts; greedy when unset.
    pub temperature: Option<f64>,
    /// Rollouts per instance when harvesting desirable behaviour.
    pub rollouts: usize,
    /// Rollouts per train instance that annotation windows and queries are
    /// drawn from.
    pub annotation_rollouts: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig {
            temperature: Some(1.0),
            rollouts: 4,
            annotation_rollouts: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Also measure completion on the train pool.
    pub train: bool,
    /// Evaluation episode seeds; the run seed when empty.
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            train: true,
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptConfig {
    /// Run directory holding the trained policy, feedback model and
    /// datasets to adapt from.
    pub from_run: PathBuf,
}

fn default_annotator() -> AnnotatorSpec {
    AnnotatorSpec::Oracle { detailed: false }
}
fn default_rounds() -> u32 {
    1
}
fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    /// Improvement rounds.
    #[serde(default = "default_rounds")]
    pub rounds: u32,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub env: EnvConfig,
    #[serde(default = "default_annotator")]
    pub annotator: AnnotatorSpec,
    #[serde(default)]
    pub budget: BudgetConfig,
    #[serde(default)]
    pub policy: PolicyHyper,
    #[serde(default)]
    pub feedback: FeedbackHyper,
    #[serde(default)]
    pub collect: CollectConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub adapt: Option<AdaptConfig>,
}

impl RunConfig {
    pub fn new(method: Method, family: EnvFamily, seed: u64) -> Self {
        RunConfig {
            method,
            seed,
            rounds: 1,
            workers: 1,
            env: EnvConfig {
                family,
                count: default_count(),
                test_count: None,
                seed: None,
                max_steps: None,
            },
            annotator: default_annotator(),
            budget: BudgetConfig::default(),
            policy: PolicyHyper::default(),
            feedback: FeedbackHyper::default(),
            collect: CollectConfig::default(),
            eval: EvalConfig::default(),
            adapt: None,
        }
    }

    pub fn eval_seeds(&self) -> Vec<u64> {
        if self.eval.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.eval.seeds.clone()
        }
    }

    /// Parse a TOML document after `${VAR}` interpolation. Unknown keys are
    /// rejected.
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let resolved = interpolate(text, |k| std::env::var(k).ok())?;
        let cfg: RunConfig =
            toml::from_str(&resolved).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.env.count == 0 {
            return bad("env.count must be positive".into());
        }
        if self.budget.window_len == 0 || self.budget.window_len > crate::annotate::WINDOW_CAP {
            return bad(format!(
                "budget.window_len must be in 1..={}",
                crate::annotate::WINDOW_CAP
            ));
        }
        if let Some(t) = self.collect.temperature {
            if !(t > 0.0 && t.is_finite()) {
                return bad("collect.temperature must be positive".into());
            }
        }
        if self.collect.rollouts == 0 || self.collect.annotation_rollouts == 0 {
            return bad("collect.rollouts and collect.annotation_rollouts must be positive".into());
        }
        if self.method == Method::LfmAdapt && self.adapt.is_none() {
            return bad(
                "method lfm_adapt needs [adapt] from_run = <run dir with a trained feedback model>"
                    .into(),
            );
        }
        Ok(())
    }

    /// Resolved configuration as written into the run directory; secrets
    /// are redacted.
    pub fn snapshot(&self) -> String {
        let mut c = self.clone();
        if let AnnotatorSpec::Remote { endpoint, .. } = &mut c.annotator {
            if endpoint.api_key.is_some() {
                endpoint.api_key = Some("<redacted>".into());
            }
        }
        toml::to_string(&c).expect("run configs serialize")
    }
}

/// Replace every `${NAME}` with `lookup(NAME)`.
pub fn interpolate(
    text: &str,
    lookup: impl Fn(&str) -> Option<String>,
) -> Result<String, PipelineError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find("${") {
        out.push_str(&rest[..i]);
        let tail = &rest[i + 2..];
        let end = tail
            .find('}')
            .ok_or_else(|| PipelineError::Config("unterminated `${` in config".into()))?;
        let name = &tail[..end];
        let value = lookup(name).ok_or_else(|| {
            PipelineError::Config(format!("environment variable `{name}` is not set"))
        })?;
        out.push_str(&value);
        rest = &tail[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "method = \"lfm\"\n[env]\nfamily = \"house-v0\"\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.rounds, 1);
        assert_eq!(c.budget.tokens, 100_000);
        assert_eq!(c.annotator, AnnotatorSpec::Oracle { detailed: false });
        let again = RunConfig::from_toml_str(&c.snapshot()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml_str(&format!("{MINIMAL}bogus = 1\n")).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = RunConfig::from_toml_str(&format!("{MINIMAL}[policy]\nstepz = 3\n")).unwrap_err();
        assert!(err.to_string().contains("stepz"), "{err}");
    }

    #[test]
    fn variables_are_interpolated() {
        let s = interpolate("key = \"${A}-${B}\"", |k| Some(k.to_lowercase())).unwrap();
        assert_eq!(s, "key = \"a-b\"");
        assert!(interpolate("${MISSING}", |_| None).is_err());
    }

    #[test]
    fn adapt_needs_a_source_run() {
        let text = "method = \"lfm_adapt\"\n[env]\nfamily = \"house-v0\"\n";
        assert!(RunConfig::from_toml_str(text).is_err());
    }
}
