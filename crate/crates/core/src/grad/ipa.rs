use std::collections::BTreeMap;

use super::{check_finite, GradMethod, GradientResult};
use crate::error::Result;
use crate::network::{Adjacency, BomNetwork};
use crate::sim::{run_observed, PeriodObserver, PeriodView, SimInput, NO_COMPONENT};
use crate::stochastic::ScenarioPath;

/// Forward propagation of `∂state/∂S`. Every matrix is `n × n` row-major with
/// row = item and column = policy component.
struct IpaObserver<'a> {
    adj: &'a dyn Adjacency,
    n: usize,
    holding: &'a [f64],
    penalty: &'a [f64],
    ip: Vec<f64>,
    order_prev: Vec<f64>,
    order: Vec<f64>,
    on_hand_prev: Vec<f64>,
    backlog_prev: Vec<f64>,
    prod_backlog_prev: Vec<f64>,
    start_on_hand: Vec<f64>,
    backlog: Vec<f64>,
    requested: Vec<f64>,
    fill: Vec<f64>,
    production: Vec<f64>,
    tmp: Vec<f64>,
    /// Jacobians of receipts, keyed by the period they land in.
    pipeline: BTreeMap<usize, Vec<f64>>,
    grad: Vec<f64>,
}

impl<'a> IpaObserver<'a> {
    fn new(adj: &'a dyn Adjacency, n: usize, holding: &'a [f64], penalty: &'a [f64], tracks_policy: bool) -> Self {
        let zeros = || vec![0.0; n * n];
        let mut ip = zeros();
        let mut on_hand_prev = zeros();
        if tracks_policy {
            for i in 0..n {
                ip[i * n + i] = 1.0;
                on_hand_prev[i * n + i] = 1.0;
            }
        }
        Self {
            adj,
            n,
            holding,
            penalty,
            ip,
            order_prev: zeros(),
            order: zeros(),
            on_hand_prev,
            backlog_prev: zeros(),
            prod_backlog_prev: zeros(),
            start_on_hand: zeros(),
            backlog: zeros(),
            requested: zeros(),
            fill: zeros(),
            production: zeros(),
            tmp: zeros(),
            pipeline: BTreeMap::new(),
            grad: vec![0.0; n],
        }
    }

    /// `order[i, :] = e_i - base[i, :]` where the pass ordered, else zero.
    fn order_rows(order: &mut [f64], base: &[f64], sub: Option<&[f64]>, gaps: &[f64], n: usize) {
        for (i, row) in order.chunks_exact_mut(n).enumerate() {
            if gaps[i] < 0.0 {
                let b = &base[i * n..(i + 1) * n];
                match sub {
                    Some(s) => {
                        let s = &s[i * n..(i + 1) * n];
                        for ((o, x), y) in row.iter_mut().zip(b).zip(s) {
                            *o = -(x - y);
                        }
                    }
                    None => row.iter_mut().zip(b).for_each(|(o, x)| *o = -x),
                }
                row[i] += 1.0;
            } else {
                row.fill(0.0);
            }
        }
    }
}

impl PeriodObserver for IpaObserver<'_> {
    fn observe(&mut self, v: &PeriodView<'_>) -> Result<()> {
        let n = self.n;

        self.adj.mul_mat_into(&self.order_prev, &mut self.tmp);
        for ((ip, o), ao) in self.ip.iter_mut().zip(&self.order_prev).zip(&self.tmp) {
            *ip += o - ao;
        }

        Self::order_rows(&mut self.order, &self.ip, None, &v.order_gaps[0], n);
        for gaps in &v.order_gaps[1..] {
            self.adj.mul_mat_into(&self.order, &mut self.tmp);
            Self::order_rows(&mut self.order, &self.ip, Some(&self.tmp), gaps, n);
        }

        let arrivals = self.pipeline.remove(&v.t);
        for i in 0..n {
            let row = i * n..(i + 1) * n;
            let positive = v.i_temp[i] > 0.0;
            for c in row {
                let x = self.on_hand_prev[c] + arrivals.as_ref().map_or(0.0, |a| a[c]) - self.backlog_prev[c];
                if positive {
                    self.start_on_hand[c] = x;
                    self.backlog[c] = 0.0;
                } else {
                    self.start_on_hand[c] = 0.0;
                    self.backlog[c] = -x;
                }
            }
        }

        for ((r, o), ob) in self.requested.iter_mut().zip(&self.order).zip(&self.prod_backlog_prev) {
            *r = o + ob;
        }
        // need Jacobian, then fill-rate Jacobian in place
        self.adj.mul_mat_into(&self.requested, &mut self.fill);
        for i in 0..n {
            let row = &mut self.fill[i * n..(i + 1) * n];
            if v.fill_active[i] {
                let (q, need) = (v.fill_rate[i], v.need[i]);
                let i0 = &self.start_on_hand[i * n..(i + 1) * n];
                for (r, x) in row.iter_mut().zip(i0) {
                    *r = (x - q * *r) / need;
                }
            } else {
                row.fill(0.0);
            }
        }

        for i in 0..n {
            let req = &self.requested[i * n..(i + 1) * n];
            let (k, j) = (v.scarcity[i], v.scarcest[i]);
            let m = &mut self.production[i * n..(i + 1) * n];
            if j == NO_COMPONENT {
                m.copy_from_slice(req);
            } else {
                let r = &self.fill[j * n..(j + 1) * n];
                let o = v.requested[i];
                for ((m, rr), q) in m.iter_mut().zip(r).zip(req) {
                    *m = o * rr + k * q;
                }
            }
            let landing = v.t + v.lead_times[i] as usize;
            if landing <= v.horizon {
                let target = self.pipeline.entry(landing).or_insert_with(|| vec![0.0; n * n]);
                for (p, m) in target[i * n..(i + 1) * n].iter_mut().zip(m.iter()) {
                    *p += m;
                }
            }
        }

        // requested becomes the production backlog, start_on_hand the end-of-period stock
        for (r, m) in self.requested.iter_mut().zip(&self.production) {
            *r -= m;
        }
        self.adj.mul_mat_into(&self.production, &mut self.tmp);
        for (i0, am) in self.start_on_hand.iter_mut().zip(&self.tmp) {
            *i0 -= am;
        }

        for i in 0..n {
            let (h, p) = (self.holding[i], self.penalty[i]);
            let on_hand = &self.start_on_hand[i * n..(i + 1) * n];
            let backlog = &self.backlog[i * n..(i + 1) * n];
            for ((g, x), b) in self.grad.iter_mut().zip(on_hand).zip(backlog) {
                *g += h * x + p * b;
            }
        }
        check_finite(&self.grad, "IPA gradient", v.t)?;

        std::mem::swap(&mut self.order_prev, &mut self.order);
        std::mem::swap(&mut self.on_hand_prev, &mut self.start_on_hand);
        std::mem::swap(&mut self.backlog_prev, &mut self.backlog);
        std::mem::swap(&mut self.prod_backlog_prev, &mut self.requested);
        Ok(())
    }
}

/// Gradient by forward Jacobian propagation: `O(T n^3)` time on the dense
/// kernel, `O(T m n)` on the sparse one, `O(n^2)` memory plus one matrix per
/// in-flight landing period.
pub fn grad_ipa(net: &BomNetwork, path: &ScenarioPath, input: SimInput<'_>) -> Result<GradientResult> {
    let adj = net.adjacency(input.kernel);
    let mut observer = IpaObserver::new(
        adj,
        net.n(),
        &input.costs.holding,
        &input.costs.penalty,
        input.init.tracks_policy(),
    );
    let costs = run_observed(net, path, input, &mut observer)?;
    Ok(GradientResult {
        method: GradMethod::Ipa,
        grad: observer.grad,
        total_cost: costs.total,
        seed: path.seed(),
        simulations: None,
    })
}
