//! Variable elimination over replicas.
//!
//! A monomial `Π q_{kl}^{e}` becomes a factor graph with one variable per
//! replica (domain `2^V`), a unary factor carrying each replica's Gibbs
//! weight, and one kernel factor `Q^e(σ_k ⊕ σ_l)` per pair. Replicas are
//! eliminated greedily by smallest predicted cost:
//!
//! * no neighbours: sum of the unary, `O(D)`;
//! * one neighbour through a kernel factor: a group convolution over
//!   `Z_2^V`, `O(V·D)` with the Walsh-Hadamard transform or `O(D²)` direct;
//! * otherwise a dense table over the neighbours, `O(D^{k+1})`.

use std::collections::BTreeSet;

use super::{AttachmentSpec, ModelContext};
use crate::error::{Error, Result};
use crate::observable::OverlapMonomial;

/// In-place unnormalized fast Walsh-Hadamard transform; the length must be
/// a power of two. Applying it twice multiplies by the length.
pub fn fwht(a: &mut [f64]) {
    let n = a.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in a.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u + v;
                *y = u - v;
            }
        }
        h *= 2;
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Problem {
    labels: Vec<u32>,
    kernels: Vec<(usize, usize, u32)>,
}

impl Problem {
    pub fn new(m: &OverlapMonomial, attach: &AttachmentSpec) -> Self {
        let mut set: BTreeSet<u32> = m.labels();
        set.extend(attach.by_label.keys().copied());
        let labels: Vec<u32> = set.into_iter().collect();
        let index = |l: u32| labels.binary_search(&l).expect("label collected");
        let kernels = m.factors().map(|(k, l, e)| (index(k), index(l), e)).collect();
        Problem { labels, kernels }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn n_vars(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Plan {
    pub order: Vec<usize>,
    pub cost: f64,
}

#[derive(Debug, Clone)]
enum Scope {
    Kernel(usize, usize),
    Table(Vec<usize>),
}

impl Scope {
    fn contains(&self, v: usize) -> bool {
        match self {
            Scope::Kernel(a, b) => *a == v || *b == v,
            Scope::Table(vs) => vs.contains(&v),
        }
    }

    fn vars(&self) -> Vec<usize> {
        match self {
            Scope::Kernel(a, b) => vec![*a, *b],
            Scope::Table(vs) => vs.clone(),
        }
    }
}

fn neighbours(scopes: &[Scope], x: usize) -> (Vec<usize>, bool) {
    let mut n = BTreeSet::new();
    let mut kernel_only = true;
    let mut count = 0;
    for s in scopes.iter().filter(|s| s.contains(x)) {
        count += 1;
        if matches!(s, Scope::Table(_)) {
            kernel_only = false;
        }
        n.extend(s.vars().into_iter().filter(|&v| v != x));
    }
    (n.into_iter().collect(), kernel_only && count == 1)
}

fn step_cost(ctx: &ModelContext, k: usize, single_kernel: bool) -> f64 {
    let d = ctx.states() as f64;
    match k {
        0 => d,
        1 if single_kernel && ctx.use_convolution() => 3.0 * ctx.volume() as f64 * d + 2.0 * d,
        _ => d.powi(k as i32 + 1),
    }
}

/// Greedy elimination order with its predicted total cost.
pub(crate) fn plan(ctx: &ModelContext, p: &Problem) -> Result<Plan> {
    let mut scopes: Vec<Scope> = p.kernels.iter().map(|&(a, b, _)| Scope::Kernel(a, b)).collect();
    let mut alive: BTreeSet<usize> = (0..p.n_vars()).collect();
    let mut order = Vec::with_capacity(p.n_vars());
    let mut cost = 0.0;
    let d = ctx.states() as f64;
    while !alive.is_empty() {
        let (x, n, c) = alive
            .iter()
            .map(|&x| {
                let (n, single) = neighbours(&scopes, x);
                let c = step_cost(ctx, n.len(), single);
                (x, n, c)
            })
            .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)))
            .expect("alive is nonempty");
        if n.len() >= 2 && d.powi(n.len() as i32) > ctx.caps.max_table {
            return Err(Error::Capacity {
                what: "elimination table entries",
                requested: d.powi(n.len() as i32),
                cap: ctx.caps.max_table,
            });
        }
        cost += c;
        scopes.retain(|s| !s.contains(x));
        if n.len() >= 2 {
            scopes.push(Scope::Table(n));
        }
        alive.remove(&x);
        order.push(x);
    }
    if cost > ctx.caps.max_cost {
        return Err(Error::Capacity {
            what: "elimination cost (operations)",
            requested: cost,
            cap: ctx.caps.max_cost,
        });
    }
    Ok(Plan { order, cost })
}

enum Factor {
    Kernel { a: usize, b: usize, power: u32 },
    Table { vars: Vec<usize>, data: Vec<f64> },
}

impl Factor {
    fn contains(&self, v: usize) -> bool {
        match self {
            Factor::Kernel { a, b, .. } => *a == v || *b == v,
            Factor::Table { vars, .. } => vars.contains(&v),
        }
    }
}

/// Runs `plan`; `unaries[i]` is the weight vector of variable `i`.
pub(crate) fn execute(ctx: &ModelContext, p: &Problem, plan: &Plan, mut unaries: Vec<Vec<f64>>) -> f64 {
    let d = ctx.states();
    let mut factors: Vec<Factor> = p
        .kernels
        .iter()
        .map(|&(a, b, power)| Factor::Kernel { a, b, power })
        .collect();
    let mut scalar = 1.0;
    for &x in &plan.order {
        let (involved, rest): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.contains(x));
        factors = rest;
        let mut nbrs = BTreeSet::new();
        for f in &involved {
            match f {
                Factor::Kernel { a, b, .. } => {
                    nbrs.insert(*a);
                    nbrs.insert(*b);
                }
                Factor::Table { vars, .. } => nbrs.extend(vars.iter().copied()),
            }
        }
        nbrs.remove(&x);
        let nbrs: Vec<usize> = nbrs.into_iter().collect();
        let ux = std::mem::take(&mut unaries[x]);

        match (nbrs.len(), involved.as_slice()) {
            (0, _) => scalar *= ux.iter().sum::<f64>(),
            (1, [Factor::Kernel { power, .. }]) => {
                let msg = convolve(ctx, &ux, *power);
                for (u, m) in unaries[nbrs[0]].iter_mut().zip(msg) {
                    *u *= m;
                }
            }
            (k, _) => {
                let table = contract(ctx, x, &ux, &nbrs, &involved, d);
                if k == 1 {
                    for (u, m) in unaries[nbrs[0]].iter_mut().zip(table) {
                        *u *= m;
                    }
                } else {
                    factors.push(Factor::Table { vars: nbrs, data: table });
                }
            }
        }
    }
    scalar
}

/// `m(y) = Σ_x u(x) Q^p(x ⊕ y)`.
fn convolve(ctx: &ModelContext, u: &[f64], power: u32) -> Vec<f64> {
    if ctx.use_convolution() {
        let spectrum = ctx.kernel_spectrum(power);
        let mut m = u.to_vec();
        fwht(&mut m);
        for (a, s) in m.iter_mut().zip(spectrum.iter()) {
            *a *= s;
        }
        fwht(&mut m);
        let inv = 1.0 / u.len() as f64;
        m.iter_mut().for_each(|a| *a *= inv);
        m
    } else {
        let g = ctx.kernel_power(power);
        (0..u.len())
            .map(|y| u.iter().enumerate().map(|(x, ux)| ux * g[x ^ y]).sum())
            .collect()
    }
}

/// Dense message over `nbrs` (row-major, first neighbour slowest).
fn contract(ctx: &ModelContext, x: usize, ux: &[f64], nbrs: &[usize], involved: &[Factor], d: usize) -> Vec<f64> {
    let n_vars = nbrs.iter().chain(std::iter::once(&x)).max().copied().unwrap_or(0) + 1;
    let mut assign = vec![0usize; n_vars.max(x + 1)];
    let kernels: Vec<(usize, usize, std::sync::Arc<Vec<f64>>)> = involved
        .iter()
        .filter_map(|f| match f {
            Factor::Kernel { a, b, power } => Some((*a, *b, ctx.kernel_power(*power))),
            _ => None,
        })
        .collect();
    let tables: Vec<(&[usize], &[f64])> = involved
        .iter()
        .filter_map(|f| match f {
            Factor::Table { vars, data } => Some((vars.as_slice(), data.as_slice())),
            _ => None,
        })
        .collect();
    let size = d.pow(nbrs.len() as u32);
    let mut out = vec![0.0; size];
    for (idx, slot) in out.iter_mut().enumerate() {
        let mut rem = idx;
        for &v in nbrs.iter().rev() {
            assign[v] = rem % d;
            rem /= d;
        }
        let mut acc = 0.0;
        for (xv, &u) in ux.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            assign[x] = xv;
            let mut val = u;
            for (a, b, g) in &kernels {
                val *= g[assign[*a] ^ assign[*b]];
            }
            for (vars, data) in &tables {
                let flat = vars.iter().fold(0usize, |acc, &v| acc * d + assign[v]);
                val *= data[flat];
            }
            acc += val;
        }
        *slot = acc;
    }
    out
}
