use super::{check_finite, GradMethod, GradientResult};
use crate::error::{Error, Result};
use crate::network::{BomNetwork, Kernel};
use crate::sim::{run_observed, CostParams, PeriodObserver, PeriodView, SimInput, NO_COMPONENT};
use crate::stochastic::ScenarioPath;

/// A production lot that lands inside the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arrival {
    pub item: u32,
    pub lead: u32,
}

/// Branch decisions and local partials of one period.
#[derive(Debug, Clone, PartialEq)]
pub struct TapePeriod {
    pub t: usize,
    /// `passes[k][i]`: pass `k` placed an order for item `i`.
    pub passes: Vec<Vec<bool>>,
    /// `I_temp > 0`.
    pub positive: Vec<bool>,
    /// `∂r/∂I0` and `∂r/∂need` (zero off the ratio branch).
    pub dr_dstock: Vec<f64>,
    pub dr_dneed: Vec<f64>,
    pub scarcity: Vec<f64>,
    pub scarcest: Vec<u32>,
    pub requested: Vec<f64>,
}

/// Everything the backward sweep needs: one entry per period, consumed
/// last-in first-out, plus the receipts landing in each period.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    pub n: usize,
    pub horizon: usize,
    pub tracks_policy: bool,
    pub periods: Vec<TapePeriod>,
    /// `arrivals[t]`: lots received in period `t`.
    pub arrivals: Vec<Vec<Arrival>>,
}

const NONE_U32: u32 = u32::MAX;

struct TapeRecorder {
    tape: Tape,
}

impl PeriodObserver for TapeRecorder {
    fn observe(&mut self, v: &PeriodView<'_>) -> Result<()> {
        let n = self.tape.n;
        let mut dr_dstock = vec![0.0; n];
        let mut dr_dneed = vec![0.0; n];
        for i in 0..n {
            if v.fill_active[i] {
                dr_dstock[i] = 1.0 / v.need[i];
                dr_dneed[i] = -v.fill_rate[i] / v.need[i];
            }
        }
        for i in 0..n {
            let lead = v.lead_times[i];
            let landing = v.t + lead as usize;
            if landing <= v.horizon {
                self.tape.arrivals[landing].push(Arrival { item: i as u32, lead });
            }
        }
        self.tape.periods.push(TapePeriod {
            t: v.t,
            passes: v.order_gaps.iter().map(|g| g.iter().map(|&x| x < 0.0).collect()).collect(),
            positive: v.i_temp.iter().map(|&x| x > 0.0).collect(),
            dr_dstock,
            dr_dneed,
            scarcity: v.scarcity.to_vec(),
            scarcest: v
                .scarcest
                .iter()
                .map(|&j| if j == NO_COMPONENT { NONE_U32 } else { j as u32 })
                .collect(),
            requested: v.requested.to_vec(),
        });
        Ok(())
    }
}

/// Runs the simulation once and keeps the tape. Memory is `O(T n)`.
pub fn record_forward(net: &BomNetwork, path: &ScenarioPath, input: SimInput<'_>) -> Result<(f64, Tape)> {
    let horizon = path.horizon();
    let mut recorder = TapeRecorder {
        tape: Tape {
            n: net.n(),
            horizon,
            tracks_policy: input.init.tracks_policy(),
            periods: Vec::with_capacity(horizon),
            arrivals: vec![Vec::new(); horizon + 1],
        },
    };
    let costs = run_observed(net, path, input, &mut recorder)?;
    Ok((costs.total, recorder.tape))
}

/// Reverse sweep over a tape, consuming it. Returns `∂C/∂S`.
pub fn backward_sweep(net: &BomNetwork, mut tape: Tape, costs: &CostParams, kernel: Kernel) -> Result<Vec<f64>> {
    let n = net.n();
    if tape.n != n {
        return Err(Error::TapeCorrupt(format!("tape has {} items, network has {n}", tape.n)));
    }
    if tape.periods.len() != tape.horizon || tape.arrivals.len() != tape.horizon + 1 {
        return Err(Error::TapeCorrupt(format!(
            "{} periods and {} arrival lists for horizon {}",
            tape.periods.len(),
            tape.arrivals.len(),
            tape.horizon
        )));
    }
    costs.validate(n)?;
    let adj = net.adjacency(kernel);
    let (h, p) = (&costs.holding, &costs.penalty);

    // adjoints flowing in from period t + 1
    let mut ip_bar = vec![0.0; n];
    let mut i_temp_bar_next = vec![0.0; n];
    let mut requested_bar_next = vec![0.0; n];
    // adjoints of production, filled in when the lot is received
    let mut m_bar_pending = vec![0.0; (tape.horizon + 1) * n];
    let mut s_bar = vec![0.0; n];

    let mut on_hand_bar = vec![0.0; n];
    let mut backlog_bar = vec![0.0; n];
    let mut m_bar = vec![0.0; n];
    let mut requested_bar = vec![0.0; n];
    let mut r_bar = vec![0.0; n];
    let mut need_bar = vec![0.0; n];
    let mut i_temp_bar = vec![0.0; n];
    let mut o_bar = vec![0.0; n];
    let mut ip_temp_bar = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    for t in (1..=tape.horizon).rev() {
        let per = tape
            .periods
            .pop()
            .ok_or_else(|| Error::TapeCorrupt(format!("missing period {t}")))?;
        if per.t != t || per.positive.len() != n || per.passes.iter().any(|g| g.len() != n) {
            return Err(Error::TapeCorrupt(format!("entry for period {} found where {t} was expected", per.t)));
        }

        for i in 0..n {
            on_hand_bar[i] = h[i] + i_temp_bar_next[i];
            backlog_bar[i] = p[i] - i_temp_bar_next[i];
        }
        adj.tmul_vec_into(&on_hand_bar, &mut tmp);
        let pending = &m_bar_pending[t * n..(t + 1) * n];
        for i in 0..n {
            m_bar[i] = pending[i] - tmp[i] - requested_bar_next[i];
        }

        r_bar.fill(0.0);
        for i in 0..n {
            requested_bar[i] = requested_bar_next[i] + per.scarcity[i] * m_bar[i];
            let j = per.scarcest[i];
            if j != NONE_U32 {
                r_bar[j as usize] += per.requested[i] * m_bar[i];
            }
        }
        for i in 0..n {
            // start-of-period stock adjoint, kept in on_hand_bar
            on_hand_bar[i] += r_bar[i] * per.dr_dstock[i];
            need_bar[i] = r_bar[i] * per.dr_dneed[i];
        }
        adj.tmul_vec_into(&need_bar, &mut tmp);
        for i in 0..n {
            requested_bar[i] += tmp[i];
            i_temp_bar[i] = if per.positive[i] { on_hand_bar[i] } else { -backlog_bar[i] };
        }

        adj.tmul_vec_into(&ip_bar, &mut tmp);
        for i in 0..n {
            o_bar[i] = requested_bar[i] + ip_bar[i] - tmp[i];
        }
        for pass in per.passes[1..].iter().rev() {
            for i in 0..n {
                if pass[i] {
                    ip_temp_bar[i] = -o_bar[i];
                    s_bar[i] += o_bar[i];
                    ip_bar[i] -= o_bar[i];
                } else {
                    ip_temp_bar[i] = 0.0;
                }
            }
            adj.tmul_vec_into(&ip_temp_bar, &mut tmp);
            for i in 0..n {
                o_bar[i] = -tmp[i];
            }
        }
        for (i, &ordered) in per.passes[0].iter().enumerate() {
            if ordered {
                s_bar[i] += o_bar[i];
                ip_bar[i] -= o_bar[i];
            }
        }

        for a in &tape.arrivals[t] {
            let (i, placed) = (a.item as usize, t - a.lead as usize);
            m_bar_pending[placed * n + i] += i_temp_bar[i];
        }
        std::mem::swap(&mut i_temp_bar_next, &mut i_temp_bar);
        std::mem::swap(&mut requested_bar_next, &mut requested_bar);
        check_finite(&s_bar, "BP adjoint", t)?;
    }

    if tape.tracks_policy {
        for i in 0..n {
            s_bar[i] += ip_bar[i] + i_temp_bar_next[i];
        }
    }
    Ok(s_bar)
}

/// Gradient by one forward run plus one reverse sweep, `O(T (n + m))`.
pub fn grad_bp(net: &BomNetwork, path: &ScenarioPath, input: SimInput<'_>) -> Result<GradientResult> {
    let (total_cost, tape) = record_forward(net, path, input)?;
    let grad = backward_sweep(net, tape, input.costs, input.kernel)?;
    Ok(GradientResult {
        method: GradMethod::Bp,
        grad,
        total_cost,
        seed: path.seed(),
        simulations: None,
    })
}
