//! Named parameter tensors and the layer handles that index into them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Activation, Gradients, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ordered, named parameter tensors of one model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Registers every tensor as a graph parameter, in store order.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.tensors.iter().map(|t| g.param(t.clone())).collect()
    }

    /// Registers every tensor as a graph constant.
    pub fn bind_constant(&self, g: &mut Graph) -> Vec<Var> {
        self.tensors.iter().map(|t| g.constant(t.clone())).collect()
    }

    /// Gradients for every bound tensor; parameters the loss does not reach
    /// get zeros.
    pub fn gradients(&self, grads: &mut Gradients, vars: &[Var]) -> Vec<Tensor> {
        vars.iter()
            .zip(&self.tensors)
            .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    }

    /// Replaces all values with those of `other`, which must have the same
    /// names and shapes in the same order.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.names != other.names {
            return Err(Error::CheckpointMismatch(format!(
                "parameter names differ ({} vs {} tensors)",
                self.len(),
                other.len()
            )));
        }
        for ((name, a), b) in self.names.iter().zip(&self.tensors).zip(&other.tensors) {
            if a.shape() != b.shape() {
                return Err(Error::CheckpointMismatch(format!(
                    "parameter `{name}` has shape {:?}, checkpoint has {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        self.tensors.clone_from(&other.tensors);
        Ok(())
    }
}

/// Dense layer `x·W + b` stored as `W[in, out]`, `b[out]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Linear {
    pub w: usize,
    pub b: Option<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Uniform `±1/√fan_in` initialization.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = store.push(
            format!("{name}.weight"),
            Tensor::uniform(&[fan_in, fan_out], bound, rng),
        );
        let b = bias.then(|| {
            store.push(
                format!("{name}.bias"),
                Tensor::uniform(&[fan_out], bound, rng),
            )
        });
        Self {
            w,
            b,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &[Var], x: Var) -> Result<Var> {
        match self.b {
            Some(b) => g.linear(x, p[self.w], p[b]),
            None => g.matmul(x, p[self.w]),
        }
    }
}

/// Layer-norm gain and shift.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norm {
    pub gain: usize,
    pub shift: usize,
}

impl Norm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.push(format!("{name}.gain"), Tensor::ones(&[dim])),
            shift: store.push(format!("{name}.shift"), Tensor::zeros(&[dim])),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &[Var], x: Var) -> Result<Var> {
        g.layer_norm(x, p[self.gain], p[self.shift])
    }
}

/// Stack of dense layers, each followed by `act`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub act: Activation,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        act: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.fc{}", i + 1), w[0], w[1], true, rng))
            .collect();
        Self { layers, act }
    }

    pub fn forward(&self, g: &mut Graph, p: &[Var], mut x: Var) -> Result<Var> {
        for layer in &self.layers {
            let h = layer.forward(g, p, x)?;
            x = g.activation(h, self.act);
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_shapes_and_names() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = Linear::new(&mut store, "proj", 4, 3, true, &mut rng);
        assert_eq!(store.names(), ["proj.weight", "proj.bias"]);
        assert_eq!(store.count(), 15);
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let x = g.constant(Tensor::ones(&[2, 4]));
        let y = l.forward(&mut g, &p, x).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 3]);
        let bad = g.constant(Tensor::ones(&[2, 5]));
        assert!(l.forward(&mut g, &p, bad).is_err());
    }

    #[test]
    fn load_from_checks_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = ParamStore::new();
        Linear::new(&mut a, "l", 2, 2, false, &mut rng);
        let mut b = ParamStore::new();
        Linear::new(&mut b, "l", 2, 3, false, &mut rng);
        assert!(matches!(a.load_from(&b), Err(Error::CheckpointMismatch(_))));
        let mut c = ParamStore::new();
        Linear::new(&mut c, "l", 2, 2, false, &mut rng);
        a.load_from(&c).unwrap();
        assert_eq!(a, c);
    }
}
