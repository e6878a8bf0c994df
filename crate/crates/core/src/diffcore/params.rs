use serde::{Deserialize, Serialize};

use super::NumArray;
use crate::error::{ensure_finite, ReqError, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Named parameter arrays together with their Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<NumArray>,
    first_moment: Vec<NumArray>,
    second_moment: Vec<NumArray>,
    step: u64,
}

impl ParamSet {
    pub fn new(named: Vec<(String, NumArray)>) -> Self {
        let (names, values): (Vec<_>, Vec<_>) = named.into_iter().unzip();
        let zeros: Vec<NumArray> = values.iter().map(|v| NumArray::zeros(v.shape())).collect();
        ParamSet {
            names,
            first_moment: zeros.clone(),
            second_moment: zeros,
            values,
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, index: usize) -> &NumArray {
        &self.values[index]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut NumArray {
        &mut self.values[index]
    }

    pub fn by_name(&self, name: &str) -> Option<&NumArray> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.values[i])
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut NumArray> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &mut self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &NumArray)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn total_size(&self) -> usize {
        self.values.iter().map(NumArray::len).sum()
    }

    /// Copies parameter values (not optimizer state) from `other`.
    pub fn copy_values_from(&mut self, other: &ParamSet) {
        debug_assert_eq!(self.names, other.names);
        for (dst, src) in self.values.iter_mut().zip(&other.values) {
            dst.values_mut().copy_from_slice(src.values());
        }
    }

    /// Gradient container with this set's names and shapes, filled with zeros.
    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            names: self.names.clone(),
            values: self
                .values
                .iter()
                .map(|v| NumArray::zeros(v.shape()))
                .collect(),
        }
    }

    /// Flattened view of all values, in declaration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.values
            .iter()
            .flat_map(|v| v.values().iter().copied())
            .collect()
    }

    /// Adds `delta` to the scalar at flat position `flat_index`.
    pub fn perturb(&mut self, flat_index: usize, delta: f64) {
        let mut offset = flat_index;
        for v in &mut self.values {
            if offset < v.len() {
                v.values_mut()[offset] += delta;
                return;
            }
            offset -= v.len();
        }
        panic!("flat index {flat_index} out of range");
    }

    /// One Adam update with the standard constants.
    pub fn adam_step(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.values.len() != self.values.len() {
            return Err(ReqError::shape(
                "adam_step",
                "parameter count",
                self.values.len(),
                grads.values.len(),
            ));
        }
        for (p, g) in self.values.iter().zip(&grads.values) {
            if p.shape() != g.shape() {
                return Err(ReqError::shape(
                    "adam_step",
                    "parameter size",
                    p.len(),
                    g.len(),
                ));
            }
            ensure_finite("adam_step gradient", g.values())?;
        }
        self.step += 1;
        let t = self.step as f64;
        let bias1 = 1.0 - ADAM_BETA1.powf(t);
        let bias2 = 1.0 - ADAM_BETA2.powf(t);
        for i in 0..self.values.len() {
            let g = grads.values[i].values();
            let m = self.first_moment[i].values_mut();
            for (m, &g) in m.iter_mut().zip(g) {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            }
            let v = self.second_moment[i].values_mut();
            for (v, &g) in v.iter_mut().zip(g) {
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            }
            let m = self.first_moment[i].values();
            let v = self.second_moment[i].values();
            for ((p, &m), &v) in self.values[i].values_mut().iter_mut().zip(m).zip(v) {
                let m_hat = m / bias1;
                let v_hat = v / bias2;
                *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }

    pub(crate) fn values_slice(&self) -> &[NumArray] {
        &self.values
    }
}

/// Gradients aligned with a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    names: Vec<String>,
    values: Vec<NumArray>,
}

impl Gradients {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, index: usize) -> &NumArray {
        &self.values[index]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut NumArray {
        &mut self.values[index]
    }

    pub fn by_name(&self, name: &str) -> Option<&NumArray> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.values[i])
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values
            .iter()
            .flat_map(|v| v.values().iter().copied())
            .collect()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            for (x, y) in a.values_mut().iter_mut().zip(b.values()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.values {
            a.values_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.values())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.max_abs()))
    }
}
