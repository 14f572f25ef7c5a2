//! Heat-bath Glauber dynamics and Monte Carlo estimates of observables.
//!
//! Chains use ChaCha8 seeded from a 64-bit seed; parallel chains take
//! distinct streams of the same seed, so results depend only on
//! (seed, chain count) and not on thread scheduling.

use std::ops::{Add, Mul};

use num::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Multigraph, Subgraph};
use crate::model::{config_stats, local_activities, Model, Observable};
use crate::rational::{to_f64, Rational};

/// Numbers the heat-bath kernel can be computed in.
pub trait KernelNum: Clone + Zero + One + Add<Output = Self> + Mul<Output = Self> {
    fn from_rational(r: &Rational) -> Self;
}

impl KernelNum for f64 {
    fn from_rational(r: &Rational) -> Self {
        to_f64(r)
    }
}

impl KernelNum for Rational {
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
}

/// Unnormalised heat-bath weights of each spin at `v`.
pub fn conditional_weights<T: KernelNum>(g: &Multigraph, model: &Model, sigma: &[u32], v: usize) -> Result<Vec<T>> {
    Ok(Kernel::<T>::new(g, model)?.conditional(sigma, v))
}

/// Heat-bath conditional weights of a fixed graph and model.
#[derive(Debug, Clone)]
pub struct Kernel<T> {
    twospin: bool,
    spins: u32,
    incidence: Vec<Vec<(usize, usize)>>,
    acts: Vec<T>,
    beta: T,
    gamma: T,
}

impl<T: KernelNum> Kernel<T> {
    pub fn new(g: &Multigraph, model: &Model) -> Result<Self> {
        model.validate()?;
        model.check_graph(g)?;
        let acts = local_activities(g, model).iter().map(T::from_rational).collect();
        let (beta, gamma) = match model {
            Model::Potts(_) => (T::one(), T::one()),
            Model::TwoSpin(t) => (T::from_rational(&t.beta), T::from_rational(&t.gamma)),
        };
        Ok(Kernel {
            twospin: matches!(model, Model::TwoSpin(_)),
            spins: model.spins(),
            incidence: g.incidence(),
            acts,
            beta,
            gamma,
        })
    }

    pub fn conditional(&self, sigma: &[u32], v: usize) -> Vec<T> {
        if self.twospin {
            let mut w0 = T::one();
            let mut w1 = self.acts[v].clone();
            for &(u, _) in &self.incidence[v] {
                if sigma[u] == 0 {
                    w0 = w0 * self.beta.clone();
                } else {
                    w1 = w1 * self.gamma.clone();
                }
            }
            vec![w0, w1]
        } else {
            let mut w = vec![T::one(); self.spins as usize];
            for &(u, e) in &self.incidence[v] {
                let c = sigma[u] as usize;
                w[c] = w[c].clone() * self.acts[e].clone();
            }
            w
        }
    }
}

/// A running Glauber chain.
#[derive(Debug, Clone)]
pub struct Chain {
    kernel: Kernel<f64>,
    state: Vec<u32>,
    steps: u64,
    rng: ChaCha8Rng,
}

impl Chain {
    /// Starts a chain from `init` (all zeros by default), which must have
    /// positive weight.
    pub fn new(g: &Multigraph, model: &Model, seed: u64, stream: u64, init: Option<Vec<u32>>) -> Result<Chain> {
        let kernel = Kernel::new(g, model)?;
        let state = init.unwrap_or_else(|| vec![0; g.n()]);
        let stats = config_stats(g, model, &state)?;
        if stats.weight.is_zero() {
            return Err(Error::invalid("initial configuration has zero weight"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(Chain {
            kernel,
            state,
            steps: 0,
            rng,
        })
    }

    /// One heat-bath update at a uniformly random vertex.
    pub fn step(&mut self) {
        let n = self.state.len();
        if n == 0 {
            self.steps += 1;
            return;
        }
        let v = self.rng.gen_range(0..n);
        let w = self.kernel.conditional(&self.state, v);
        let total: f64 = w.iter().sum();
        let mut u = self.rng.gen::<f64>() * total;
        let mut pick = w.len() - 1;
        for (s, x) in w.iter().enumerate() {
            if u < *x {
                pick = s;
                break;
            }
            u -= x;
        }
        // Never move to a zero-weight spin, even at the rounding edge.
        if w[pick] == 0.0 {
            pick = w.iter().rposition(|x| *x > 0.0).unwrap_or(self.state[v] as usize);
        }
        self.state[v] = pick as u32;
        self.steps += 1;
    }

    pub fn run(&mut self, steps: u64) {
        for _ in 0..steps {
            self.step();
        }
    }

    pub fn state(&self) -> &[u32] {
        &self.state
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

/// Runs `steps` single-site updates from `init`.
pub fn glauber_run(g: &Multigraph, model: &Model, steps: u64, seed: u64, init: Option<Vec<u32>>) -> Result<Chain> {
    let mut c = Chain::new(g, model, seed, 0, init)?;
    c.run(steps);
    Ok(c)
}

/// Exact one-step transition matrix over all configurations, indexed in
/// base-`spins` order with vertex 0 least significant.
pub fn transition_kernel(g: &Multigraph, model: &Model) -> Result<Vec<Vec<Rational>>> {
    let k = Kernel::<Rational>::new(g, model)?;
    let q = model.spins() as usize;
    let n = g.n();
    let size = q.checked_pow(n as u32).filter(|s| *s <= 4096).ok_or_else(|| Error::Budget {
        needed: format!("{q}^{n} states"),
        budget: 4096,
    })?;
    let decode = |mut i: usize| -> Vec<u32> {
        (0..n)
            .map(|_| {
                let s = (i % q) as u32;
                i /= q;
                s
            })
            .collect()
    };
    let mut p = vec![vec![Rational::zero(); size]; size];
    let site = Rational::new(1.into(), (n.max(1) as i64).into());
    for (x, row) in p.iter_mut().enumerate() {
        let sigma = decode(x);
        if n == 0 {
            row[x] = Rational::one();
            continue;
        }
        let mut stride = 1;
        for v in 0..n {
            let w = k.conditional(&sigma, v);
            let total = w.iter().fold(Rational::zero(), |a, b| a + b);
            if !total.is_zero() {
                for (s, ws) in w.iter().enumerate() {
                    let y = x - sigma[v] as usize * stride + s * stride;
                    row[y] += &site * ws / &total;
                }
            } else {
                row[x] += &site;
            }
            stride *= q;
        }
    }
    Ok(p)
}

/// Unnormalised Gibbs weights in the order of [`transition_kernel`].
pub fn gibbs_weights(g: &Multigraph, model: &Model) -> Result<Vec<Rational>> {
    let q = model.spins() as usize;
    let n = g.n();
    let size = q.checked_pow(n as u32).filter(|s| *s <= 4096).ok_or_else(|| Error::Budget {
        needed: format!("{q}^{n} states"),
        budget: 4096,
    })?;
    (0..size)
        .map(|mut i| {
            let sigma: Vec<u32> = (0..n)
                .map(|_| {
                    let s = (i % q) as u32;
                    i /= q;
                    s
                })
                .collect();
            Ok(config_stats(g, model, &sigma)?.weight)
        })
        .collect()
}

/// Monte Carlo estimate with a batch-means standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    /// `None` when fewer than two batches are available.
    pub std_error: Option<f64>,
    pub samples: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub seed: u64,
}

/// Sampling schedule; `thinning` counts single-site updates between samples
/// (0 means one sweep, i.e. |V| updates).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub samples: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub seed: u64,
    pub chains: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            samples: 10_000,
            burn_in: 1_000,
            thinning: 0,
            seed: 1,
            chains: 1,
        }
    }
}

/// Observable evaluated in f64 on a fixed subgraph.
struct FastObservable {
    potts: bool,
    coef: [f64; 3],
    edges: Vec<(usize, usize)>,
    vertices: Vec<usize>,
}

impl FastObservable {
    fn new(g: &Multigraph, obs: &Observable, sub: &Subgraph) -> Self {
        let edges = g
            .edges()
            .iter()
            .enumerate()
            .filter(|(e, _)| sub.edges[*e])
            .map(|(_, &uv)| uv)
            .collect();
        let vertices = (0..g.n()).filter(|&v| sub.vertices[v]).collect();
        match obs {
            Observable::Monochromatic => FastObservable {
                potts: true,
                coef: [0.0; 3],
                edges,
                vertices,
            },
            Observable::VertexEdge(o) => FastObservable {
                potts: false,
                coef: [to_f64(&o.a), to_f64(&o.b), to_f64(&o.c)],
                edges,
                vertices,
            },
        }
    }

    fn eval(&self, s: &[u32]) -> f64 {
        if self.potts {
            self.edges.iter().filter(|&&(a, b)| s[a] == s[b]).count() as f64
        } else {
            let ones = self.vertices.iter().filter(|&&v| s[v] == 1).count() as f64;
            let (mut m0, mut m1) = (0.0, 0.0);
            for &(a, b) in &self.edges {
                if s[a] == s[b] {
                    if s[a] == 0 {
                        m0 += 1.0;
                    } else {
                        m1 += 1.0;
                    }
                }
            }
            self.coef[0] * ones + self.coef[1] * m0 + self.coef[2] * m1
        }
    }
}

/// Mean and batch-means standard error with ⌊√N⌋ batches.
pub fn batch_means(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n.max(1) as f64;
    let b = (n as f64).sqrt().floor() as usize;
    if n < 2 || b < 2 {
        return (mean, None);
    }
    let size = n / b;
    let batch: Vec<f64> = (0..b).map(|i| xs[i * size..(i + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let bm = batch.iter().sum::<f64>() / b as f64;
    let var = batch.iter().map(|x| (x - bm) * (x - bm)).sum::<f64>() / (b - 1) as f64;
    (mean, Some((var / b as f64).sqrt()))
}

/// Collects `samples` observable readings from one chain.
pub fn chain_samples<F: FnMut(&[u32]) -> f64>(
    g: &Multigraph,
    model: &Model,
    config: &McConfig,
    stream: u64,
    mut f: F,
) -> Result<Vec<f64>> {
    let mut chain = Chain::new(g, model, config.seed, stream, None)?;
    chain.run(config.burn_in);
    let thin = if config.thinning == 0 { g.n().max(1) as u64 } else { config.thinning };
    let mut out = Vec::with_capacity(config.samples as usize);
    for _ in 0..config.samples {
        chain.run(thin);
        out.push(f(chain.state()));
    }
    Ok(out)
}

/// Estimates the expectation of `obs` over `sub` (whole graph by default).
/// With several chains, `samples` is split evenly and readings are merged
/// in chain order before batching.
pub fn mc_estimate(
    g: &Multigraph,
    model: &Model,
    obs: &Observable,
    sub: Option<&Subgraph>,
    config: &McConfig,
) -> Result<Estimate> {
    if config.samples == 0 {
        return Err(Error::invalid("samples must be at least 1"));
    }
    obs.check_model(model)?;
    let whole = Subgraph::whole(g);
    let sub = sub.unwrap_or(&whole);
    sub.check(g)?;
    let fast = FastObservable::new(g, obs, sub);
    let chains = config.chains.max(1).min(config.samples);
    let per = config.samples / chains;
    let extra = config.samples % chains;
    let parts: Vec<Result<Vec<f64>>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let cfg = McConfig {
                samples: per + u64::from(c < extra),
                ..*config
            };
            chain_samples(g, model, &cfg, c, |s| fast.eval(s))
        })
        .collect();
    let mut xs = Vec::with_capacity(config.samples as usize);
    for p in parts {
        xs.extend(p?);
    }
    let (mean, std_error) = batch_means(&xs);
    Ok(Estimate {
        mean,
        std_error,
        samples: config.samples,
        burn_in: config.burn_in,
        thinning: config.thinning,
        seed: config.seed,
    })
}
