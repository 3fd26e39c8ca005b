use serde::{Deserialize, Serialize};

use crate::network::{NetworkParams, Part, Trainable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam optimiser state: first/second moments per parameter tensor.
///
/// Frozen parts are skipped entirely: neither their values nor their moments
/// change.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub hyper: AdamHyper,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &NetworkParams, learning_rate: f64) -> Self {
        let shapes: Vec<usize> = params.tensors().map(|(_, t)| t.len()).collect();
        Adam {
            learning_rate,
            hyper: AdamHyper::default(),
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn apply(&mut self, params: &mut NetworkParams, grads: &NetworkParams, trainable: Trainable) {
        self.step += 1;
        let AdamHyper { beta1, beta2, eps } = self.hyper;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let lr = self.learning_rate;
        for (((part, p), (_, g)), (m, v)) in params
            .tensors_mut()
            .zip(grads.tensors())
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            if !trainable.allows(part) {
                continue;
            }
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

impl Trainable {
    pub fn allows(self, part: Part) -> bool {
        match part {
            Part::Enc => self.enc,
            Part::Dec => self.dec,
            Part::Filter => self.filter,
            Part::Fc => self.fc,
        }
    }
}
