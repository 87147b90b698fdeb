use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::agents::{CostSpec, Mechanism, MechanismRecord, NumericOptions};
use crate::error::{Error, Result};
use crate::observe::{induce, population_response, InduceOptions, InducedDistribution, Mode, MomentsRecord};
use crate::scm::StructuralModel;

/// Deploy-and-observe interface between a principal and a population.
pub trait Environment {
    fn n_features(&self) -> usize;

    /// The distribution with no mechanism deployed. Not counted as a deployment.
    fn natural(&mut self) -> Result<InducedDistribution>;

    /// Release `f` and observe the induced distribution.
    fn deploy(&mut self, f: &Mechanism) -> Result<InducedDistribution>;

    /// Number of `deploy` calls so far.
    fn deployments(&self) -> usize;
}

/// Diagnostics of the most recent simulated deployment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeployDiagnostics {
    pub nonconverged: usize,
    pub degenerate: usize,
}

/// Simulated population over a known SCM.
///
/// In empirical mode the population's noise is drawn once, so every
/// deployment (and the natural distribution) is observed on the same agents.
#[derive(Debug, Clone)]
pub struct SimulatedEnvironment {
    scm: StructuralModel,
    cost: CostSpec,
    budget: f64,
    mode: Mode,
    seed: u64,
    numeric: NumericOptions,
    noise: Option<DMatrix<f64>>,
    natural: Option<InducedDistribution>,
    count: usize,
    last: DeployDiagnostics,
    total_nonconverged: usize,
}

impl SimulatedEnvironment {
    pub fn new(scm: StructuralModel, cost: CostSpec, budget: f64, mode: Mode, seed: u64) -> Result<Self> {
        cost.validate(scm.n_features(), Some(scm.graph()))?;
        if !(budget > 0.0 && budget.is_finite()) {
            return Err(Error::InvalidCost(format!(
                "budget must be positive and finite, got {budget}"
            )));
        }
        let noise = match mode {
            Mode::Exact => {
                if !scm.is_linear() {
                    return Err(Error::Unsupported("exact mode needs a linear structural model".into()));
                }
                None
            }
            Mode::Empirical { count } => {
                if count < 2 {
                    return Err(Error::InvalidModel("empirical mode needs at least 2 agents".into()));
                }
                Some(scm.noise_matrix(count, seed))
            }
        };
        Ok(Self {
            scm,
            cost,
            budget,
            mode,
            seed,
            numeric: NumericOptions::default(),
            noise,
            natural: None,
            count: 0,
            last: DeployDiagnostics::default(),
            total_nonconverged: 0,
        })
    }

    pub fn with_numeric(mut self, numeric: NumericOptions) -> Self {
        self.numeric = numeric;
        self
    }

    pub fn scm(&self) -> &StructuralModel {
        &self.scm
    }

    pub fn cost(&self) -> &CostSpec {
        &self.cost
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn last_diagnostics(&self) -> &DeployDiagnostics {
        &self.last
    }

    /// Agents whose numeric best response hit the iteration cap, over all deployments.
    pub fn total_nonconverged(&self) -> usize {
        self.total_nonconverged
    }

    fn observe(&mut self, f: &Mechanism) -> Result<InducedDistribution> {
        match &self.noise {
            None => induce(
                &self.scm,
                f,
                &self.cost,
                self.budget,
                &InduceOptions {
                    mode: Mode::Exact,
                    seed: self.seed,
                    numeric: self.numeric.clone(),
                },
            ),
            Some(noise) => {
                let resp = population_response(&self.scm, f, &self.cost, self.budget, noise, &self.numeric)?;
                self.last = DeployDiagnostics {
                    nonconverged: resp.nonconverged,
                    degenerate: resp.degenerate,
                };
                self.total_nonconverged += resp.nonconverged;
                let samples = crate::observe::apply_rows(&self.scm, noise, &resp.interventions);
                InducedDistribution::empirical(samples)
            }
        }
    }
}

impl Environment for SimulatedEnvironment {
    fn n_features(&self) -> usize {
        self.scm.n_features()
    }

    fn natural(&mut self) -> Result<InducedDistribution> {
        if let Some(d) = &self.natural {
            return Ok(d.clone());
        }
        let d = self.observe(&Mechanism::zero(self.scm.n_features()))?;
        self.natural = Some(d.clone());
        Ok(d)
    }

    fn deploy(&mut self, f: &Mechanism) -> Result<InducedDistribution> {
        f.validate(self.scm.n_features())?;
        self.count += 1;
        self.observe(f)
    }

    fn deployments(&self) -> usize {
        self.count
    }
}

/// One recorded deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentRecord {
    pub mechanism: MechanismRecord,
    pub moments: MomentsRecord,
}

/// Recorded natural distribution plus deployments, in exact-moment form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub n_features: usize,
    pub natural: MomentsRecord,
    pub deployments: Vec<DeploymentRecord>,
}

/// Wraps an environment and records every observation.
pub struct Recorder<E> {
    inner: E,
    recording: Recording,
}

impl<E: Environment> Recorder<E> {
    pub fn new(mut inner: E) -> Result<Self> {
        let natural = inner.natural()?;
        if !natural.is_exact() {
            return Err(Error::Unsupported(
                "only exact-moment environments can be recorded".into(),
            ));
        }
        let natural = natural.to_moments();
        let n_features = inner.n_features();
        Ok(Self {
            inner,
            recording: Recording {
                n_features,
                natural,
                deployments: Vec::new(),
            },
        })
    }

    pub fn into_recording(self) -> Recording {
        self.recording
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Environment> Environment for Recorder<E> {
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    fn natural(&mut self) -> Result<InducedDistribution> {
        self.inner.natural()
    }

    fn deploy(&mut self, f: &Mechanism) -> Result<InducedDistribution> {
        let d = self.inner.deploy(f)?;
        if !d.is_exact() {
            return Err(Error::Unsupported(
                "only exact-moment deployments can be recorded".into(),
            ));
        }
        self.recording.deployments.push(DeploymentRecord {
            mechanism: f.describe(self.inner.n_features()),
            moments: d.to_moments(),
        });
        Ok(d)
    }

    fn deployments(&self) -> usize {
        self.inner.deployments()
    }
}

/// Replays a [`Recording`]: a deployment is answered by the first unused
/// record whose mechanism matches (coefficients within `1e-9`).
pub struct RecordedEnvironment {
    recording: Recording,
    used: Vec<bool>,
    count: usize,
}

impl RecordedEnvironment {
    pub fn new(recording: Recording) -> Self {
        let used = vec![false; recording.deployments.len()];
        Self {
            recording,
            used,
            count: 0,
        }
    }
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs())))
}

fn same_mechanism(a: &MechanismRecord, b: &MechanismRecord) -> bool {
    use MechanismRecord::*;
    match (a, b) {
        (Linear { weights: wa }, Linear { weights: wb }) => close(wa, wb),
        (
            NodeMinusModel {
                target: ta,
                regressors: ra,
                coefficients: ca,
                ..
            },
            NodeMinusModel {
                target: tb,
                regressors: rb,
                coefficients: cb,
                ..
            },
        ) => ta == tb && ra == rb && ca.len() == cb.len() && ca.iter().zip(cb).all(|(x, y)| close(x, y)),
        (Custom { name: na }, Custom { name: nb }) => na == nb,
        _ => false,
    }
}

impl Environment for RecordedEnvironment {
    fn n_features(&self) -> usize {
        self.recording.n_features
    }

    fn natural(&mut self) -> Result<InducedDistribution> {
        self.recording.natural.clone().into_distribution(None)
    }

    fn deploy(&mut self, f: &Mechanism) -> Result<InducedDistribution> {
        let want = f.describe(self.recording.n_features);
        let idx = (0..self.used.len())
            .find(|&k| !self.used[k] && same_mechanism(&self.recording.deployments[k].mechanism, &want))
            .ok_or_else(|| Error::InvalidModel(format!("no recorded deployment for mechanism {want:?}")))?;
        self.used[idx] = true;
        self.count += 1;
        let natural = self.recording.natural.clone().into_distribution(None)?;
        self.recording.deployments[idx]
            .moments
            .clone()
            .into_distribution(Some(natural.mean()))
    }

    fn deployments(&self) -> usize {
        self.count
    }
}
