//! Dense bounded-variable revised simplex for programs of the form
//!
//! ```text
//! max  cᵀz
//! s.t. rhs_k − ε ≤ (A z)_k ≤ rhs_k + ε     k = 1..p
//!      lo ≤ z_i ≤ hi                       i = 1..n
//! ```
//!
//! with few rows (p) and many columns (n). Each range row gets a bounded
//! logical variable s_k = (A z)_k, so the working system is `A z − s = 0`
//! and every variable is boxed. Nonbasic variables sit at one of their
//! bounds; the basis inverse is a dense p × p matrix, updated by elementary
//! row operations and refactored periodically.
//!
//! Phase one adds one artificial per row that the starting point violates
//! and minimizes their sum. Pricing is Dantzig's rule with ties broken by
//! lowest index; after a run of degenerate pivots it switches to Bland's
//! rule until progress resumes.

use nalgebra::DMatrix;

const REFACTOR_EVERY: usize = 64;
const PIVOT_TOL: f64 = 1e-11;
const PRIMAL_TOL: f64 = 1e-10;
const PHASE_ONE_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

/// Column data of a boxed program. `columns` is n × p, column i stored
/// contiguously.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Problem<'a> {
    pub objective: &'a [f64],
    pub columns: &'a [f64],
    pub rhs: &'a [f64],
    pub lower: f64,
    pub upper: f64,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.objective.len()
    }

    fn p(&self) -> usize {
        self.rhs.len()
    }

    fn column(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.columns[i * p..(i + 1) * p]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Optimum {
    pub z: Vec<f64>,
    /// Row multipliers y for the maximization actually solved.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Outcome {
    Optimal(Optimum),
    /// Phase one could not drive the artificials to zero; carries their
    /// minimal sum.
    Infeasible(f64),
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    AtLower,
    AtUpper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Structural(usize),
    Logical(usize),
    Artificial { row: usize, sign: i8 },
}

struct Tableau<'a> {
    prob: Problem<'a>,
    kinds: Vec<Kind>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    iterations: usize,
    since_refactor: usize,
}

impl<'a> Tableau<'a> {
    fn p(&self) -> usize {
        self.prob.p()
    }

    /// Adds `scale * column(j)` into `out`.
    fn axpy_column(&self, j: usize, scale: f64, out: &mut [f64]) {
        match self.kinds[j] {
            Kind::Structural(i) => {
                for (o, a) in out.iter_mut().zip(self.prob.column(i)) {
                    *o += scale * a;
                }
            }
            Kind::Logical(k) => out[k] -= scale,
            Kind::Artificial { row, sign } => out[row] += scale * sign as f64,
        }
    }

    fn column_dot(&self, j: usize, y: &[f64]) -> f64 {
        match self.kinds[j] {
            Kind::Structural(i) => self.prob.column(i).iter().zip(y).map(|(a, b)| a * b).sum(),
            Kind::Logical(k) => -y[k],
            Kind::Artificial { row, sign } => sign as f64 * y[row],
        }
    }

    /// B⁻¹ a_j.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let p = self.p();
        let mut a = vec![0.0; p];
        self.axpy_column(j, 1.0, &mut a);
        let mut out = vec![0.0; p];
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..p).map(|c| self.binv[(r, c)] * a[c]).sum();
        }
        out
    }

    /// y = c_Bᵀ B⁻¹.
    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let p = self.p();
        let mut y = vec![0.0; p];
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (c, yc) in y.iter_mut().enumerate() {
                    *yc += cb * self.binv[(r, c)];
                }
            }
        }
        y
    }

    /// Rebuilds B⁻¹ and the basic values from the nonbasic ones.
    fn refactor(&mut self) -> bool {
        let p = self.p();
        let mut b = DMatrix::<f64>::zeros(p, p);
        for (pos, &j) in self.basis.iter().enumerate() {
            let mut col = vec![0.0; p];
            self.axpy_column(j, 1.0, &mut col);
            for (r, v) in col.into_iter().enumerate() {
                b[(r, pos)] = v;
            }
        }
        let Some(inv) = b.try_inverse() else {
            return false;
        };
        self.binv = inv;
        let mut rhs = vec![0.0; p];
        for j in 0..self.x.len() {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                self.axpy_column(j, -self.x[j], &mut rhs);
            }
        }
        for (pos, &j) in self.basis.iter().enumerate() {
            self.x[j] = (0..p).map(|c| self.binv[(pos, c)] * rhs[c]).sum();
        }
        self.since_refactor = 0;
        true
    }

    /// Runs simplex iterations maximizing `cost` until optimal.
    fn optimize(&mut self, cost: &[f64], max_iter: usize) -> Result<(), usize> {
        let scale = cost.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1e-300);
        let dual_tol = 1e-11 * scale;
        let mut degenerate_run = 0usize;

        loop {
            if self.iterations >= max_iter {
                return Err(self.iterations);
            }
            if self.since_refactor >= REFACTOR_EVERY && !self.refactor() {
                return Err(self.iterations);
            }
            let y = self.duals(cost);
            let bland = degenerate_run >= DEGENERATE_RUN;

            // Pricing.
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.x.len() {
                let st = self.state[j];
                if st == State::Basic || self.hi[j] <= self.lo[j] {
                    continue;
                }
                let d = cost[j] - self.column_dot(j, &y);
                let improving = match st {
                    State::AtLower => d > dual_tol,
                    State::AtUpper => d < -dual_tol,
                    State::Basic => false,
                };
                if !improving {
                    continue;
                }
                if bland {
                    entering = Some((j, d));
                    break;
                }
                if entering.is_none_or(|(_, best)| d.abs() > best.abs()) {
                    entering = Some((j, d));
                }
            }
            let Some((q, _)) = entering else {
                return Ok(());
            };
            self.iterations += 1;
            self.since_refactor += 1;

            let dir = if self.state[q] == State::AtLower { 1.0 } else { -1.0 };
            let alpha = self.ftran(q);

            // Ratio test: basic variable at position r moves at rate −dir·α_r.
            let mut step = self.hi[q] - self.lo[q];
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_alpha = 0.0f64;
            for (r, &a) in alpha.iter().enumerate() {
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let j = self.basis[r];
                let rate = -dir * a;
                let (room, to_upper) = if rate < 0.0 {
                    (((self.x[j] - self.lo[j]).max(0.0)) / -rate, false)
                } else if self.hi[j].is_finite() {
                    (((self.hi[j] - self.x[j]).max(0.0)) / rate, true)
                } else {
                    continue;
                };
                let tol = PRIMAL_TOL * (1.0 + step.abs());
                let better = match leave {
                    None => room < step,
                    Some(_) if room < step - tol => true,
                    Some((best_r, _)) if room <= step + tol => {
                        if bland {
                            j < self.basis[best_r]
                        } else {
                            a.abs() > leave_alpha
                        }
                    }
                    Some(_) => false,
                };
                if better {
                    step = step.min(room);
                    leave = Some((r, to_upper));
                    leave_alpha = a.abs();
                }
            }
            if !step.is_finite() {
                // Unbounded direction; cannot happen with boxed structurals
                // and a phase-one objective bounded by zero.
                return Err(self.iterations);
            }

            if step <= PRIMAL_TOL {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }

            self.x[q] += dir * step;
            for (r, &a) in alpha.iter().enumerate() {
                let j = self.basis[r];
                self.x[j] -= dir * a * step;
            }

            match leave {
                None => {
                    // Bound flip.
                    self.state[q] = if dir > 0.0 { State::AtUpper } else { State::AtLower };
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                }
                Some((r, to_upper)) => {
                    let out = self.basis[r];
                    self.state[out] = if to_upper { State::AtUpper } else { State::AtLower };
                    self.x[out] = if to_upper { self.hi[out] } else { self.lo[out] };
                    self.state[q] = State::Basic;
                    self.basis[r] = q;
                    self.pivot(r, &alpha);
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let p = self.p();
        let piv = alpha[r];
        for c in 0..p {
            self.binv[(r, c)] /= piv;
        }
        for (i, &a) in alpha.iter().enumerate() {
            if i != r && a != 0.0 {
                for c in 0..p {
                    let v = self.binv[(r, c)];
                    self.binv[(i, c)] -= a * v;
                }
            }
        }
    }
}

/// Solves `max cᵀz` over the boxed range program with equality slack `eps`.
pub(crate) fn maximize(prob: Problem<'_>, eps: f64, max_iter: usize) -> Outcome {
    let n = prob.n();
    let p = prob.p();

    let mut kinds: Vec<Kind> = (0..n).map(Kind::Structural).collect();
    kinds.extend((0..p).map(Kind::Logical));
    let mut lo = vec![prob.lower; n];
    let mut hi = vec![prob.upper; n];
    lo.extend(prob.rhs.iter().map(|b| b - eps));
    hi.extend(prob.rhs.iter().map(|b| b + eps));

    // Start each structural at the bound its cost favours.
    let mut x: Vec<f64> = Vec::with_capacity(n + 2 * p);
    let mut state = Vec::with_capacity(n + 2 * p);
    for &c in prob.objective {
        if c > 0.0 {
            x.push(prob.upper);
            state.push(State::AtUpper);
        } else {
            x.push(prob.lower);
            state.push(State::AtLower);
        }
    }
    let mut activity = vec![0.0; p];
    for i in 0..n {
        for (a, v) in activity.iter_mut().zip(prob.column(i)) {
            *a += v * x[i];
        }
    }

    let mut basis = vec![0usize; p];
    let mut binv = DMatrix::<f64>::zeros(p, p);
    let mut artificial_rows = Vec::new();
    for k in 0..p {
        let j = n + k;
        let (l, u) = (lo[j], hi[j]);
        if activity[k] >= l && activity[k] <= u {
            x.push(activity[k]);
            state.push(State::Basic);
            basis[k] = j;
            binv[(k, k)] = -1.0;
        } else {
            let (bound, st) = if activity[k] < l {
                (l, State::AtLower)
            } else {
                (u, State::AtUpper)
            };
            x.push(bound);
            state.push(st);
            artificial_rows.push(k);
        }
    }
    for &k in &artificial_rows {
        // activity − s + sign·a = 0 with a ≥ 0.
        let gap = x[n + k] - activity[k];
        let sign: i8 = if gap >= 0.0 { 1 } else { -1 };
        let j = kinds.len();
        kinds.push(Kind::Artificial { row: k, sign });
        lo.push(0.0);
        hi.push(f64::INFINITY);
        x.push(gap.abs());
        state.push(State::Basic);
        basis[k] = j;
        binv[(k, k)] = sign as f64;
    }

    let mut tab = Tableau {
        prob,
        kinds,
        lo,
        hi,
        x,
        state,
        basis,
        binv,
        iterations: 0,
        since_refactor: 0,
    };

    let total = tab.x.len();
    if !artificial_rows.is_empty() {
        let mut phase_one = vec![0.0; total];
        for (j, kind) in tab.kinds.iter().enumerate() {
            if matches!(kind, Kind::Artificial { .. }) {
                phase_one[j] = -1.0;
            }
        }
        if let Err(it) = tab.optimize(&phase_one, max_iter) {
            return Outcome::IterationLimit(it);
        }
        tab.refactor();
        let infeasibility: f64 = (n + p..total).map(|j| tab.x[j].max(0.0)).sum();
        if infeasibility > PHASE_ONE_TOL {
            return Outcome::Infeasible(infeasibility);
        }
        for j in n + p..total {
            tab.hi[j] = 0.0;
            if tab.state[j] != State::Basic {
                tab.x[j] = 0.0;
                tab.state[j] = State::AtLower;
            }
        }
    }

    let mut cost = vec![0.0; total];
    cost[..n].copy_from_slice(prob.objective);
    if let Err(it) = tab.optimize(&cost, max_iter) {
        return Outcome::IterationLimit(it);
    }
    tab.refactor();
    let duals = tab.duals(&cost);

    let z = tab.x[..n]
        .iter()
        .map(|v| v.clamp(prob.lower, prob.upper))
        .collect();
    Outcome::Optimal(Optimum {
        z,
        duals,
        iterations: tab.iterations,
    })
}
