use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::oracle::{self, oracle_summary};
use super::parse::{
    parse_action_prediction, parse_retro_actions, parse_step_feedback, ActionMatch, ParsedFeedback,
};
use super::prompt::{
    build_actpred_prompt, build_dagger_prompt, build_detailed_prompt, build_lfm_prompt,
    render_detailed_response, render_feedback_text, render_retro_actions,
};
use super::remote::{EndpointConfig, RemoteClient};
use super::{AnnotateError, Privileged, TokenLedger, Window};
use crate::env::{EnvState, Instruction};
use crate::policy::ContextWindow;
use crate::tokenize::count_tokens;

/// Which annotator answers feedback and action queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnnotatorSpec {
    /// Ground truth from the hidden state.
    Oracle {
        #[serde(default)]
        detailed: bool,
    },
    /// Ground truth with seeded corruption.
    Noisy {
        #[serde(default)]
        fp_rate: f64,
        #[serde(default)]
        fn_rate: f64,
        #[serde(default)]
        wrong_action_rate: f64,
        #[serde(default)]
        detailed: bool,
    },
    Remote {
        endpoint: EndpointConfig,
        #[serde(default)]
        detailed: bool,
    },
}

impl AnnotatorSpec {
    pub fn detailed(&self) -> bool {
        match self {
            AnnotatorSpec::Oracle { detailed }
            | AnnotatorSpec::Noisy { detailed, .. }
            | AnnotatorSpec::Remote { detailed, .. } => *detailed,
        }
    }

    /// Short identifier recorded with datasets.
    pub fn id(&self) -> String {
        match self {
            AnnotatorSpec::Oracle { .. } => "oracle".into(),
            AnnotatorSpec::Noisy {
                fp_rate,
                fn_rate,
                wrong_action_rate,
                ..
            } => format!("noisy(fp={fp_rate},fn={fn_rate},wrong={wrong_action_rate})"),
            AnnotatorSpec::Remote { endpoint, .. } => format!("remote:{}", endpoint.id),
        }
    }
}

enum Backend {
    Oracle,
    Noisy {
        fp_rate: f64,
        fn_rate: f64,
        wrong_action_rate: f64,
    },
    Remote(Box<RemoteClient>),
}

/// An annotator bound to a seed. Every answer is charged to a ledger by the
/// token count of its textual response; simulated annotators render the
/// response they would have sent.
pub struct Annotator {
    backend: Backend,
    detailed: bool,
    seed: u64,
}

impl Annotator {
    pub fn new(spec: &AnnotatorSpec, seed: u64) -> Result<Self, AnnotateError> {
        let backend = match spec {
            AnnotatorSpec::Oracle { .. } => Backend::Oracle,
            AnnotatorSpec::Noisy {
                fp_rate,
                fn_rate,
                wrong_action_rate,
                ..
            } => Backend::Noisy {
                fp_rate: *fp_rate,
                fn_rate: *fn_rate,
                wrong_action_rate: *wrong_action_rate,
            },
            AnnotatorSpec::Remote { endpoint, .. } => {
                Backend::Remote(Box::new(RemoteClient::new(endpoint.clone())?))
            }
        };
        Ok(Annotator {
            backend,
            detailed: spec.detailed(),
            seed,
        })
    }

    pub fn with_client(client: RemoteClient, detailed: bool) -> Self {
        Annotator {
            backend: Backend::Remote(Box::new(client)),
            detailed,
            seed: 0,
        }
    }

    fn charge(ledger: &Mutex<TokenLedger>, response: &str) -> Result<(), AnnotateError> {
        ledger
            .lock()
            .unwrap()
            .charge(count_tokens(response) as u64)?;
        Ok(())
    }

    /// Per-step feedback on a window.
    pub fn feedback(
        &self,
        window: &Window,
        privileged: &Privileged,
        ledger: &Mutex<TokenLedger>,
    ) -> Result<ParsedFeedback, AnnotateError> {
        parse_step_feedback(&self.feedback_response(window, privileged, ledger)?, window)
    }

    /// The prompt a remote annotator would receive for `window`.
    pub fn feedback_prompt(&self, window: &Window) -> String {
        if self.detailed {
            build_detailed_prompt(window)
        } else {
            build_lfm_prompt(window)
        }
    }

    /// Raw feedback text for a window, charged to `ledger`.
    pub fn feedback_response(
        &self,
        window: &Window,
        privileged: &Privileged,
        ledger: &Mutex<TokenLedger>,
    ) -> Result<String, AnnotateError> {
        Ok(match &self.backend {
            Backend::Remote(client) => client.complete(&self.feedback_prompt(window), ledger)?,
            sim => {
                let labels = match sim {
                    Backend::Noisy {
                        fp_rate, fn_rate, ..
                    } => oracle::noisy_annotate(
                        window,
                        privileged,
                        *fp_rate,
                        *fn_rate,
                        self.seed,
                        self.detailed,
                    )?,
                    _ => oracle::oracle_annotate(window, privileged, self.detailed)?,
                };
                let text = if self.detailed {
                    let (summary, improvement) = oracle_summary(window, &labels);
                    render_detailed_response(&labels, &summary, &improvement)
                } else {
                    render_feedback_text(&labels)
                };
                Self::charge(ledger, &text)?;
                text
            }
        })
    }

    /// The next action at a state.
    pub fn predict_action(
        &self,
        ctx: &ContextWindow,
        candidates: &[String],
        state: &EnvState,
        instruction: &Instruction,
        ledger: &Mutex<TokenLedger>,
    ) -> Result<ActionMatch, AnnotateError> {
        let prompt =
            || build_actpred_prompt(&ctx.instruction, &ctx.history, &ctx.observation, candidates);
        let response = match &self.backend {
            Backend::Remote(client) => client.complete(&prompt(), ledger)?,
            Backend::Oracle => {
                let a = oracle::expert_action(state, instruction)?.0;
                Self::charge(ledger, &a)?;
                a
            }
            Backend::Noisy {
                wrong_action_rate, ..
            } => {
                let expert = oracle::expert_action(state, instruction)?.0;
                let a = oracle::noisy_predict_action(
                    &prompt(),
                    candidates,
                    &expert,
                    *wrong_action_rate,
                    self.seed,
                )?;
                Self::charge(ledger, &a)?;
                a
            }
        };
        parse_action_prediction(&response, candidates)
    }

    /// Retroactive expert actions for every step of a window, in one call.
    /// Returns the matched actions and the number of unusable bullets.
    pub fn retro_actions(
        &self,
        window: &Window,
        privileged: &Privileged,
        ledger: &Mutex<TokenLedger>,
    ) -> Result<(Vec<(u32, ActionMatch)>, usize), AnnotateError> {
        let response = match &self.backend {
            Backend::Remote(client) => client.complete(&build_dagger_prompt(window), ledger)?,
            sim => {
                let mut actions = oracle::oracle_retro_actions(window, privileged)?;
                if let Backend::Noisy {
                    wrong_action_rate, ..
                } = sim
                {
                    for (i, (n, a)) in actions.iter_mut().enumerate() {
                        // Key each step like the single-step predictor would.
                        let key = format!("{}|{}|{}", window.instance_id, window.rollout_id, n);
                        *a = oracle::noisy_predict_action(
                            &key,
                            &privileged.candidates[i],
                            a,
                            *wrong_action_rate,
                            self.seed,
                        )?;
                    }
                }
                let text = render_retro_actions(&actions);
                Self::charge(ledger, &text)?;
                text
            }
        };
        Ok(parse_retro_actions(
            &response,
            window,
            &privileged.candidates,
        ))
    }
}
