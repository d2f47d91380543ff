//! Minimum-distance-to-mean motor-imagery classifier with supervised
//! prototype adaptation.

pub mod snapshot;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::TaskLabel;
use crate::spd::{geodesic, mean, riemannian_distance, SpdError, SpdMatrix};

/// Separability reported when every class sits exactly on its prototype.
pub const SEPARABILITY_CAP: f64 = 1e6;

#[derive(Debug, Error)]
pub enum MiError {
    #[error("a model needs at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("the class list must include `idle`")]
    MissingIdle,
    #[error("class `{0}` is declared twice")]
    DuplicateClass(TaskLabel),
    #[error("classes with fewer than two examples: {}", join(.0))]
    Starved(Vec<TaskLabel>),
    #[error("label `{0}` is not a model class")]
    UnknownLabel(TaskLabel),
    #[error("need at least two classes with data to compute metrics")]
    NotEnoughClasses,
    #[error("adaptation alpha {0} is outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("adaptation period must be at least 1")]
    InvalidPeriod,
    #[error("{classes} classes but {prototypes} prototypes")]
    PrototypeCount { classes: usize, prototypes: usize },
    #[error(transparent)]
    Spd(#[from] SpdError),
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(labels: &[TaskLabel]) -> String {
    labels
        .iter()
        .map(TaskLabel::as_str)
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationParams {
    /// Geodesic step from the old prototype towards the mean of new data.
    pub alpha: f64,
    /// Labeled epochs accumulated between automatic updates.
    pub period: usize,
}

impl Default for AdaptationParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            period: 30,
        }
    }
}

impl AdaptationParams {
    pub fn validate(&self) -> Result<(), MiError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(MiError::InvalidAlpha(self.alpha));
        }
        if self.period == 0 {
            return Err(MiError::InvalidPeriod);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: TaskLabel,
    /// Distance to each prototype, in class order.
    pub distances: Vec<f64>,
    /// `(d₂ − d₁)/(d₂ + d₁)` for winner `d₁` and runner-up `d₂`.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceMetrics {
    pub separability: f64,
    /// `(class, dispersion, consistency)` for every class present in the data.
    pub per_class: Vec<ClassMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: TaskLabel,
    pub dispersion: f64,
    pub consistency: f64,
}

impl PerformanceMetrics {
    pub fn consistency(&self, label: &TaskLabel) -> Option<f64> {
        self.per_class
            .iter()
            .find(|c| &c.label == label)
            .map(|c| c.consistency)
    }
}

/// Per-class prototypes plus adaptation state. Operations return new values.
#[derive(Debug, Clone, PartialEq)]
pub struct MiModel {
    classes: Vec<TaskLabel>,
    prototypes: Vec<SpdMatrix>,
    params: AdaptationParams,
    pending: Vec<Vec<SpdMatrix>>,
}

impl MiModel {
    pub fn from_prototypes(
        classes: Vec<TaskLabel>,
        prototypes: Vec<SpdMatrix>,
        params: AdaptationParams,
    ) -> Result<Self, MiError> {
        check_classes(&classes)?;
        params.validate()?;
        if classes.len() != prototypes.len() {
            return Err(MiError::PrototypeCount {
                classes: classes.len(),
                prototypes: prototypes.len(),
            });
        }
        for p in &prototypes[1..] {
            if p.dim() != prototypes[0].dim() {
                return Err(SpdError::DimensionMismatch {
                    left: prototypes[0].dim(),
                    right: p.dim(),
                }
                .into());
            }
        }
        let pending = vec![Vec::new(); classes.len()];
        Ok(Self {
            classes,
            prototypes,
            params,
            pending,
        })
    }

    /// One prototype per declared class, the Karcher mean of its examples.
    pub fn train(
        classes: &[TaskLabel],
        labeled: &[(SpdMatrix, TaskLabel)],
        params: AdaptationParams,
    ) -> Result<Self, MiError> {
        check_classes(classes)?;
        let groups = group(classes, labeled)?;
        let starved: Vec<TaskLabel> = classes
            .iter()
            .zip(&groups)
            .filter(|(_, g)| g.len() < 2)
            .map(|(c, _)| c.clone())
            .collect();
        if !starved.is_empty() {
            return Err(MiError::Starved(starved));
        }
        let prototypes = groups
            .iter()
            .map(|g| mean(g))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_prototypes(classes.to_vec(), prototypes, params)
    }

    pub fn classes(&self) -> &[TaskLabel] {
        &self.classes
    }

    pub fn prototypes(&self) -> &[SpdMatrix] {
        &self.prototypes
    }

    pub fn prototype(&self, label: &TaskLabel) -> Option<&SpdMatrix> {
        self.index_of(label).map(|i| &self.prototypes[i])
    }

    pub fn params(&self) -> AdaptationParams {
        self.params
    }

    pub fn dim(&self) -> usize {
        self.prototypes[0].dim()
    }

    pub fn pending(&self) -> &[Vec<SpdMatrix>] {
        &self.pending
    }

    pub fn pending_len(&self) -> usize {
        self.pending.iter().map(Vec::len).sum()
    }

    pub fn index_of(&self, label: &TaskLabel) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    pub fn with_params(mut self, params: AdaptationParams) -> Result<Self, MiError> {
        params.validate()?;
        self.params = params;
        Ok(self)
    }

    pub fn distances(&self, c: &SpdMatrix) -> Result<Vec<f64>, MiError> {
        Ok(self
            .prototypes
            .iter()
            .map(|p| riemannian_distance(c, p))
            .collect::<Result<Vec<_>, _>>()?)
    }

    /// Nearest prototype; ties go to the class declared first.
    pub fn classify(&self, c: &SpdMatrix) -> Result<Classification, MiError> {
        let distances = self.distances(c)?;
        let mut best = 0;
        for (i, d) in distances.iter().enumerate() {
            if *d < distances[best] {
                best = i;
            }
        }
        let runner_up = distances
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != best)
            .map(|(_, d)| *d)
            .fold(f64::INFINITY, f64::min);
        Ok(Classification {
            label: self.classes[best].clone(),
            score: contrast(runner_up, distances[best]),
            distances,
        })
    }

    /// Moves each class with new data a fraction `alpha` of the way towards
    /// the mean of that data. Pending buffers are cleared.
    pub fn adapt(&self, batch: &[(SpdMatrix, TaskLabel)]) -> Result<Self, MiError> {
        let groups = group(&self.classes, batch)?;
        self.apply(&groups)
    }

    fn apply(&self, groups: &[Vec<SpdMatrix>]) -> Result<Self, MiError> {
        let mut prototypes = self.prototypes.clone();
        for (proto, new) in prototypes.iter_mut().zip(groups) {
            if new.is_empty() {
                continue;
            }
            for m in new {
                proto.check_dim(m)?;
            }
            let target = mean(new)?;
            *proto = geodesic(proto, &target, self.params.alpha)?;
        }
        Ok(Self {
            classes: self.classes.clone(),
            prototypes,
            params: self.params,
            pending: vec![Vec::new(); self.classes.len()],
        })
    }

    /// Buffers one labeled epoch and adapts once `period` epochs have
    /// accumulated. Returns whether an update fired.
    pub fn record(&mut self, c: SpdMatrix, label: &TaskLabel) -> Result<bool, MiError> {
        let i = self
            .index_of(label)
            .ok_or_else(|| MiError::UnknownLabel(label.clone()))?;
        self.prototypes[0].check_dim(&c)?;
        self.pending[i].push(c);
        if self.pending_len() < self.params.period {
            return Ok(false);
        }
        let groups = std::mem::take(&mut self.pending);
        *self = self.apply(&groups)?;
        Ok(true)
    }

    /// Drops buffered epochs without updating.
    pub fn discard_pending(&mut self) {
        self.pending = vec![Vec::new(); self.classes.len()];
    }

    pub(crate) fn set_pending(&mut self, pending: Vec<Vec<SpdMatrix>>) {
        self.pending = pending;
    }

    /// Dispersion, separability and consistency over the classes present in
    /// `labeled`. Each present class needs at least two matrices.
    pub fn performance_metrics(
        &self,
        labeled: &[(SpdMatrix, TaskLabel)],
    ) -> Result<PerformanceMetrics, MiError> {
        let groups = group(&self.classes, labeled)?;
        let starved: Vec<TaskLabel> = self
            .classes
            .iter()
            .zip(&groups)
            .filter(|(_, g)| g.len() == 1)
            .map(|(c, _)| c.clone())
            .collect();
        if !starved.is_empty() {
            return Err(MiError::Starved(starved));
        }
        let present: Vec<usize> = (0..self.classes.len())
            .filter(|i| !groups[*i].is_empty())
            .collect();
        if present.len() < 2 {
            return Err(MiError::NotEnoughClasses);
        }

        let mut per_class = Vec::new();
        for &i in &present {
            let d: Vec<f64> = groups[i]
                .iter()
                .map(|m| riemannian_distance(m, &self.prototypes[i]))
                .collect::<Result<_, _>>()?;
            let n = d.len() as f64;
            let mu = d.iter().sum::<f64>() / n;
            let var = d.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
            per_class.push(ClassMetrics {
                label: self.classes[i].clone(),
                dispersion: mu,
                consistency: 1.0 / (1.0 + var.sqrt()),
            });
        }

        let mut separability = f64::INFINITY;
        for (a, &i) in present.iter().enumerate() {
            for (b, &j) in present.iter().enumerate().skip(a + 1) {
                let between = riemannian_distance(&self.prototypes[i], &self.prototypes[j])?;
                let spread = per_class[a].dispersion + per_class[b].dispersion;
                let ratio = if between == 0.0 {
                    0.0
                } else if spread == 0.0 {
                    SEPARABILITY_CAP
                } else {
                    (between / spread).min(SEPARABILITY_CAP)
                };
                separability = separability.min(ratio);
            }
        }
        Ok(PerformanceMetrics {
            separability,
            per_class,
        })
    }
}

/// `(far − near)/(far + near)`, zero when both vanish.
pub(crate) fn contrast(far: f64, near: f64) -> f64 {
    let sum = far + near;
    if sum == 0.0 {
        0.0
    } else {
        (far - near) / sum
    }
}

fn check_classes(classes: &[TaskLabel]) -> Result<(), MiError> {
    if classes.len() < 2 {
        return Err(MiError::TooFewClasses(classes.len()));
    }
    for (i, c) in classes.iter().enumerate() {
        if classes[..i].contains(c) {
            return Err(MiError::DuplicateClass(c.clone()));
        }
    }
    if !classes.iter().any(TaskLabel::is_idle) {
        return Err(MiError::MissingIdle);
    }
    Ok(())
}

fn group(
    classes: &[TaskLabel],
    labeled: &[(SpdMatrix, TaskLabel)],
) -> Result<Vec<Vec<SpdMatrix>>, MiError> {
    let mut groups = vec![Vec::new(); classes.len()];
    for (m, l) in labeled {
        let i = classes
            .iter()
            .position(|c| c == l)
            .ok_or_else(|| MiError::UnknownLabel(l.clone()))?;
        groups[i].push(m.clone());
    }
    Ok(groups)
}
