//! Finite-difference checks of every trainable module on a tiny `f64`
//! configuration.

use mivit_autodiff::{grad_check_many, GradCheckReport, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::losses::{iac_loss, idf_loss, IdfWeights};
use crate::model::{Mivit, ModelConfig};
use crate::params::{group_of, seeded_rng, Bound, ParamStore};

/// Step of the central difference.
pub const STEP: f64 = 1e-3;
/// Largest accepted relative error.
pub const TOLERANCE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Module {
    Encoder,
    Oaf,
    Vit,
    Iac,
    Idf,
}

impl Module {
    /// The modules run by `all`.
    pub const ALL: [Module; 5] = [Module::Encoder, Module::Oaf, Module::Vit, Module::Iac, Module::Idf];

    pub fn name(self) -> &'static str {
        match self {
            Module::Encoder => "encoder",
            Module::Oaf => "oaf",
            Module::Vit => "vit",
            Module::Iac => "iac",
            Module::Idf => "idf",
        }
    }

    pub fn parse(s: &str) -> Result<Vec<Module>> {
        Ok(match s {
            "all" => Module::ALL.to_vec(),
            "encoder" => vec![Module::Encoder],
            "oaf" => vec![Module::Oaf],
            "vit" => vec![Module::Vit],
            "iac" => vec![Module::Iac],
            "idf" => vec![Module::Idf],
            _ => return Err(Error::Config(format!("unknown module {s:?}"))),
        })
    }
}

/// Small enough that a full finite-difference sweep takes seconds.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        bands: [3, 2],
        classes: 3,
        cube_sizes: vec![3, 5],
        d: 3,
        s0: 2,
        d_model: 4,
        layers: 1,
        heads: 2,
        mlp_ratio: 2,
        k: 3,
        shallow_width: 3,
        shallow_depth: 1,
        mapper_width: 2,
        d_z: Some(3),
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Weighted sum with fixed random weights, so every output element matters.
fn probe(t: &mut Tape<f64>, y: Var, rng_seed: u64) -> mivit_autodiff::Result<Var> {
    let mut rng = seeded_rng(rng_seed, 9);
    let w = t.constant(uniform(&mut rng, t.shape(y)));
    let p = t.mul(y, w)?;
    t.sum(p)
}

/// Parameters of the selected groups become checked inputs, redrawn from
/// `U(-1, 1)` so the check runs at a generic point rather than at the
/// near-degenerate initialisation (tiny class token, unit norms). All other
/// parameters stay constant. Extra inputs follow the parameters.
struct Harness {
    store: ParamStore<f64>,
    varied: Vec<usize>,
}

impl Harness {
    fn new(mut store: ParamStore<f64>, rng: &mut ChaCha8Rng, keep: impl Fn(&str) -> bool) -> Self {
        let varied: Vec<usize> = (0..store.len()).filter(|&i| keep(&store.names()[i])).collect();
        for &i in &varied {
            let shape = store.tensors()[i].shape().to_vec();
            store.tensors_mut()[i] = uniform(rng, &shape);
        }
        Harness { store, varied }
    }

    fn inputs(&self, extra: &[Tensor<f64>]) -> Vec<Tensor<f64>> {
        let mut v: Vec<Tensor<f64>> = self.varied.iter().map(|&i| self.store.tensors()[i].clone()).collect();
        v.extend(extra.iter().cloned());
        v
    }

    /// Binds the store with the checked parameters taken from `vars`;
    /// returns the remaining (extra) variables.
    fn bind<'v>(&self, t: &mut Tape<f64>, vars: &'v [Var]) -> (Bound, &'v [Var]) {
        let mut it = vars.iter();
        let all = (0..self.store.len())
            .map(|i| {
                if self.varied.contains(&i) {
                    *it.next().expect("one variable per checked parameter")
                } else {
                    t.constant(self.store.tensors()[i].clone())
                }
            })
            .collect();
        (Bound::from_vars(all), &vars[self.varied.len()..])
    }
}

fn cubes(rng: &mut ChaCha8Rng, cfg: &ModelConfig, batch: usize, m: usize) -> Vec<Tensor<f64>> {
    cfg.cube_sizes.iter().map(|&s| uniform(rng, &[batch, cfg.bands[m], s, s])).collect()
}

fn map(rng: &mut ChaCha8Rng, cfg: &ModelConfig, batch: usize) -> Tensor<f64> {
    uniform(rng, &[batch, cfg.d, cfg.s0, cfg.s0])
}

/// Runs the check for one module with a given seed.
pub fn check_module(module: Module, seed: u64) -> Result<GradCheckReport> {
    check_module_with(module, seed, STEP)
}

/// [`check_module`] with an explicit difference step.
pub fn check_module_with(module: Module, seed: u64, step: f64) -> Result<GradCheckReport> {
    let cfg = tiny_config();
    let (model, store) = Mivit::new(&cfg, seed)?;
    let store = store.cast::<f64>();
    let mut rng = seeded_rng(seed, 7);
    let batch = 3;
    let rep = match module {
        Module::Encoder => {
            let h = Harness::new(store, &mut rng, |n| group_of(n) == "enc.m1");
            let x = cubes(&mut rng, &cfg, batch, 0);
            grad_check_many(
                |t, v| {
                    let (p, x) = h.bind(t, v);
                    let phi = model.encode(t, &p, 0, x).map_err(into_tensor)?;
                    probe(t, phi, seed)
                },
                &h.inputs(&x),
                step,
            )?
        }
        Module::Oaf => {
            let h = Harness::new(store, &mut rng, |n| group_of(n) == "oaf");
            let x = [map(&mut rng, &cfg, batch), map(&mut rng, &cfg, batch)];
            grad_check_many(
                |t, v| {
                    let (p, x) = h.bind(t, v);
                    let y = model.oaf.forward(t, &p, x[0], x[1]).map_err(into_tensor)?;
                    probe(t, y, seed)
                },
                &h.inputs(&x),
                step,
            )?
        }
        Module::Vit => {
            let h = Harness::new(store, &mut rng, |n| group_of(n) == "vit");
            let x = [map(&mut rng, &cfg, batch)];
            grad_check_many(
                |t, v| {
                    let (p, x) = h.bind(t, v);
                    let enc = model.vit.encode(t, &p, x[0]).map_err(into_tensor)?;
                    let rec = model.vit.decode(t, &p, enc.tokens).map_err(into_tensor)?;
                    let mut acc = probe(t, enc.tokens, seed)?;
                    for (i, r) in rec.iter().flatten().enumerate() {
                        let s = probe(t, *r, seed + 1 + i as u64)?;
                        acc = t.add(acc, s)?;
                    }
                    Ok(acc)
                },
                &h.inputs(&x),
                step,
            )?
        }
        Module::Iac => {
            let h = Harness::new(store, &mut rng, |n| group_of(n) == "iac.mappers");
            let x = [map(&mut rng, &cfg, batch), map(&mut rng, &cfg, batch), map(&mut rng, &cfg, batch)];
            grad_check_many(
                |t, v| {
                    let (p, x) = h.bind(t, v);
                    let z = model.mappers[0].forward(t, &p, x[0]).map_err(into_tensor)?;
                    let z1 = model.mappers[1].forward(t, &p, x[1]).map_err(into_tensor)?;
                    let z2 = model.mappers[2].forward(t, &p, x[2]).map_err(into_tensor)?;
                    iac_loss(t, z1, z2, z, 1.0).map_err(into_tensor)
                },
                &h.inputs(&x),
                step,
            )?
        }
        Module::Idf => {
            let h = Harness::new(store, &mut rng, |_| false);
            let logits: Vec<Tensor<f64>> = (0..3).map(|_| uniform(&mut rng, &[batch, cfg.classes])).collect();
            let y: Vec<usize> = (0..batch).map(|i| i % cfg.classes).collect();
            let w = IdfWeights { lambda3: 1.0, lambda4: 0.1, detach_teacher: false };
            grad_check_many(
                |t, v| {
                    let (_, x) = h.bind(t, v);
                    let c1 = t.softmax(x[0])?;
                    let c2 = t.softmax(x[1])?;
                    let c = t.softmax(x[2])?;
                    idf_loss(t, c1, c2, c, &y, w).map_err(into_tensor)
                },
                &h.inputs(&logits),
                step,
            )?
        }
    };
    Ok(rep)
}

fn into_tensor(e: Error) -> mivit_autodiff::TensorError {
    match e {
        Error::Tensor(t) => t,
        other => mivit_autodiff::TensorError::Shape { op: "gradcheck", detail: other.to_string() },
    }
}
