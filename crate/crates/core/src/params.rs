//! Named parameter storage. A parameter's group is the part of its name
//! before the first `/`.

use std::ops::Index;

use mivit_autodiff::{Element, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T: Element = f32> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }
}

pub fn group_of(name: &str) -> &str {
    name.split('/').next().unwrap_or(name)
}

impl<T: Element> ParamStore<T> {
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
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

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    /// Total element count of parameters whose name satisfies `keep`.
    pub fn count(&self, keep: impl Fn(&str) -> bool) -> usize {
        self.names
            .iter()
            .zip(&self.tensors)
            .filter(|(n, _)| keep(n))
            .map(|(_, t)| t.numel())
            .sum()
    }

    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
        }
    }

    /// Records every parameter as a gradient-tracking leaf. Gradients held by
    /// the store are not carried onto the tape.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        Bound(
            self.tensors
                .iter()
                .map(|t| {
                    let mut leaf = t.clone().with_grad();
                    leaf.clear_grad();
                    tape.leaf(leaf)
                })
                .collect(),
        )
    }

    /// Records every parameter as a constant (no gradients).
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> Bound {
        Bound(self.tensors.iter().map(|t| tape.constant(t.clone())).collect())
    }

    /// Replaces each parameter's gradient with the one accumulated on `tape`.
    pub fn load_grads(&mut self, tape: &Tape<T>, bound: &Bound) {
        for (t, &v) in self.tensors.iter_mut().zip(&bound.0) {
            t.clear_grad();
            if let Some(g) = tape.grad(v) {
                t.accumulate_grad(g);
            }
        }
    }

    pub fn zero_where(&mut self, pred: impl Fn(&str) -> bool) {
        for (n, t) in self.names.iter().zip(&mut self.tensors) {
            if pred(n) {
                t.data_mut().iter_mut().for_each(|v| *v = T::zero());
            }
        }
    }
}

/// Tape variables for every parameter of a store, indexable by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    /// Wraps tape variables given in store order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound(vars)
    }
}

impl Index<ParamId> for Bound {
    type Output = Var;
    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

/// Allocates and initialises parameters under a name prefix.
pub struct Builder<'a> {
    pub store: &'a mut ParamStore<f32>,
    pub rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a> Builder<'a> {
    pub fn new(store: &'a mut ParamStore<f32>, rng: &'a mut ChaCha8Rng) -> Self {
        Self { store, rng, prefix: String::new() }
    }

    pub fn scope(&mut self, name: &str) -> Builder<'_> {
        let prefix = if self.prefix.is_empty() {
            format!("{name}/")
        } else {
            format!("{}{name}.", self.prefix)
        };
        Builder { store: self.store, rng: self.rng, prefix }
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f32) -> ParamId {
        let t = Tensor::from_fn(shape, |_| self.rng.gen_range(-bound..=bound));
        self.store.push(format!("{}{name}", self.prefix), t)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], sd: f32) -> ParamId {
        let dist = Normal::new(0.0, sd).expect("positive standard deviation");
        let t = Tensor::from_fn(shape, |_| dist.sample(self.rng));
        self.store.push(format!("{}{name}", self.prefix), t)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f32) -> ParamId {
        self.store.push(format!("{}{name}", self.prefix), Tensor::full(shape, value))
    }
}

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
