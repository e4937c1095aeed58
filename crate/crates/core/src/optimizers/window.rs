use std::collections::VecDeque;

use crate::error::{OboError, Result};
use crate::hypergrad::HypergradRecord;
use crate::types::Vector;

/// `W = Σ_{i=0}^{K-1} η^i`.
pub fn normalization(eta: f64, k: usize) -> f64 {
    let mut total = 0.0;
    let mut weight = 1.0;
    for _ in 0..k {
        total += weight;
        weight *= eta;
    }
    total
}

/// `(1/W) Σ η^i g_i` over `(age, g)` pairs, ages ascending from 0.
///
/// Missing ages contribute zero; `W` always spans the full window. Shared by
/// every optimizer so degenerate configurations agree bitwise.
pub(crate) fn weighted_average<'a>(
    items: impl IntoIterator<Item = &'a Vector>,
    eta: f64,
    k: usize,
    dim: usize,
) -> Vector {
    let mut acc = Vector::zeros(dim);
    let mut weight = 1.0;
    for g in items.into_iter().take(k) {
        acc.axpy(weight, g, 1.0);
        weight *= eta;
    }
    acc / normalization(eta, k)
}

/// The `K` most recent hypergradient estimates, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBuffer {
    capacity: usize,
    eta: f64,
    records: VecDeque<HypergradRecord>,
}

impl WindowBuffer {
    pub fn new(capacity: usize, eta: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(OboError::Config("window capacity must be at least 1".into()));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(OboError::Config(format!("eta must lie in (0, 1], got {eta}")));
        }
        Ok(Self {
            capacity,
            eta,
            records: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Newest first.
    pub fn records(&self) -> impl Iterator<Item = &HypergradRecord> {
        self.records.iter()
    }

    pub fn normalization(&self) -> f64 {
        normalization(self.eta, self.capacity)
    }

    /// Inserts the newest record, evicting the oldest when full.
    pub fn push(&mut self, record: HypergradRecord) -> Result<()> {
        if let Some(front) = self.records.front() {
            if record.round <= front.round {
                return Err(OboError::Argument(format!(
                    "record for round {} is not newer than round {}",
                    record.round, front.round
                )));
            }
        }
        self.records.push_front(record);
        if self.records.len() > self.capacity {
            self.records.pop_back();
        }
        Ok(())
    }

    /// Total weight applied to stored records, `Σ_{i<len} η^i / W`.
    pub fn applied_weight(&self) -> f64 {
        normalization(self.eta, self.records.len()) / self.normalization()
    }
}

/// Exponentially weighted window average of the stored estimates.
pub fn window_average(buffer: &WindowBuffer) -> Result<Vector> {
    let dim = buffer.records.front().ok_or(OboError::EmptyWindow)?.grad.len();
    Ok(weighted_average(
        buffer.records.iter().map(|r| &r.grad),
        buffer.eta,
        buffer.capacity,
        dim,
    ))
}
