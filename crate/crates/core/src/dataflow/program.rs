use alloc::vec;
use alloc::vec::Vec;

use super::{CgState, Mode, Outcome, PeColumnStore, EXCHANGE_DONE, REDUCE_DONE, SIDES};
use crate::comm::{
    start_all_reduce, start_exchange, AllReduceHost, ExchangeHost, ExchangeState, ReduceState,
};
use crate::fabric::{Ctx, FabricDims, FabricError, PeCoord};
use crate::perf::{cg_vector_work, fabric_word, neighbor_term, OpCounts};
use crate::reference::{face_term, CgOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Computing the starting residual.
    Setup,
    Loop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pending {
    Rr,
    XJx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Y,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Scalars {
    pub x_jx: f32,
    pub alpha: f32,
    pub rr: f32,
    pub beta: Option<f32>,
}

fn add(a: f32, b: f32) -> f32 {
    a + b
}

/// State of one PE running the CG program.
#[derive(Debug, Clone)]
pub struct CgPe {
    pub store: PeColumnStore,
    pub(crate) ex: ExchangeState,
    pub(crate) red: ReduceState,
    mode: Mode,
    phase: Phase,
    pending: Pending,
    source: Source,
    lead: bool,
    record: bool,
    eps: f32,
    k_max: usize,
    x_jx: f32,
    alpha: f32,
    pub(crate) rr: f32,
    pub(crate) initial_rr: f32,
    pub(crate) k: usize,
    pub(crate) outcome: Option<Outcome>,
    pub(crate) exchanges: usize,
    pub(crate) reductions: usize,
    pub(crate) loop_costs: Vec<OpCounts>,
    pub(crate) setup_costs: OpCounts,
    pub(crate) scalars: Vec<Scalars>,
    pub(crate) y_history: Vec<Vec<f32>>,
    pub(crate) r_history: Vec<Vec<f32>>,
    pub(crate) trace: Vec<(u64, CgState)>,
}

impl ExchangeHost for CgPe {
    fn exchange(&mut self) -> &mut ExchangeState {
        &mut self.ex
    }

    fn outgoing(&self) -> &[f32] {
        match self.source {
            Source::Y => &self.store.y,
            Source::X => &self.store.x,
        }
    }
}

impl AllReduceHost for CgPe {
    fn reduce(&mut self) -> &mut ReduceState {
        &mut self.red
    }
}

impl CgPe {
    pub(crate) fn new(
        pe: PeCoord,
        dims: FabricDims,
        store: PeColumnStore,
        mode: Mode,
        opts: &CgOptions,
    ) -> Self {
        let nz = store.nz;
        Self {
            ex: ExchangeState::new(pe, dims, nz, EXCHANGE_DONE),
            red: ReduceState::new(add, REDUCE_DONE),
            mode,
            phase: Phase::Setup,
            pending: Pending::Rr,
            source: Source::X,
            lead: pe == PeCoord::new(0, 0),
            record: opts.record_history,
            eps: opts.eps as f32,
            k_max: opts.k_max,
            x_jx: 0.0,
            alpha: 0.0,
            rr: 0.0,
            initial_rr: 0.0,
            k: 0,
            outcome: None,
            exchanges: 0,
            reductions: 0,
            loop_costs: vec![OpCounts::ZERO; nz],
            setup_costs: OpCounts::ZERO,
            scalars: Vec::new(),
            y_history: Vec::new(),
            r_history: Vec::new(),
            trace: Vec::new(),
            store,
        }
    }

    fn enter(&mut self, ctx: &mut Ctx, state: CgState) {
        if self.lead {
            self.trace.push((ctx.tick(), state));
            ctx.mark(state.code());
        }
    }

    fn charge(&mut self, z: usize, c: OpCounts) {
        match self.phase {
            Phase::Setup => self.setup_costs += c,
            Phase::Loop => self.loop_costs[z] += c,
        }
    }

    pub(crate) fn on_start(&mut self, ctx: &mut Ctx) -> Result<(), FabricError> {
        match self.mode {
            Mode::Cg => {
                self.enter(ctx, CgState::Init);
                let s = &mut self.store;
                for z in 0..s.nz {
                    s.y[z] = if s.dirichlet[z] { s.r[z] } else { 0.0 };
                }
                self.exchange(ctx, Source::Y);
            }
            Mode::Jacobian => self.exchange(ctx, Source::X),
            Mode::Dot => {
                let p = partial(&self.store.x, &self.store.r);
                self.reductions += 1;
                start_all_reduce(self, ctx, p);
            }
        }
        Ok(())
    }

    fn exchange(&mut self, ctx: &mut Ctx, source: Source) {
        self.enter(ctx, CgState::Exchange);
        self.source = source;
        self.exchanges += 1;
        start_exchange(self, ctx);
    }

    pub(crate) fn on_exchange_done(&mut self, ctx: &mut Ctx) -> Result<(), FabricError> {
        if self.mode == Mode::Cg {
            self.enter(ctx, CgState::ApplyJ);
        }
        self.apply_jacobian();
        match (self.mode, self.phase) {
            (Mode::Jacobian, _) => {}
            (Mode::Dot, _) => return Err(ctx.fail("exchange finished in a dot-only run")),
            (Mode::Cg, Phase::Setup) => {
                self.enter(ctx, CgState::UpdateR);
                let s = &mut self.store;
                for z in 0..s.nz {
                    s.r[z] -= s.jx[z];
                    s.x[z] = s.r[z];
                }
                self.dot_rr(ctx);
            }
            (Mode::Cg, Phase::Loop) => {
                self.enter(ctx, CgState::DotXjx);
                self.pending = Pending::XJx;
                let p = partial(&self.store.x, &self.store.jx);
                self.reductions += 1;
                start_all_reduce(self, ctx, p);
            }
        }
        Ok(())
    }

    fn dot_rr(&mut self, ctx: &mut Ctx) {
        self.enter(ctx, CgState::DotRr);
        self.pending = Pending::Rr;
        let p = partial(&self.store.r, &self.store.r);
        self.reductions += 1;
        start_all_reduce(self, ctx, p);
    }

    /// `jx = J col` for this column, `col` being whatever was just sent.
    fn apply_jacobian(&mut self) {
        let nz = self.store.nz;
        let term = neighbor_term();
        for z in 0..nz {
            let s = &self.store;
            let col = match self.source {
                Source::Y => &s.y,
                Source::X => &s.x,
            };
            let present = s.sides.iter().filter(|side| side.is_some()).count() as u64;
            let mut terms = 0;
            let value = if s.dirichlet[z] {
                col[z]
            } else {
                let lk = s.mobility[z];
                let xk = col[z];
                let mut acc = 0.0f32;
                for (link, side) in SIDES.iter().zip(&s.sides) {
                    if let (Some(side), Some(buf)) = (side, self.ex.buffers.get(*link)) {
                        acc += face_term(side.trans[z], lk, side.mobility[z], xk, buf[z]);
                        terms += 1;
                    }
                }
                if z > 0 {
                    acc += face_term(s.trans_z[z - 1], lk, s.mobility[z - 1], xk, col[z - 1]);
                    terms += 1;
                }
                if z + 1 < nz {
                    acc += face_term(s.trans_z[z], lk, s.mobility[z + 1], xk, col[z + 1]);
                    terms += 1;
                }
                acc
            };
            self.store.jx[z] = value;
            self.charge(z, term.times(terms) + fabric_word().times(present));
        }
    }

    pub(crate) fn on_reduce_done(&mut self, ctx: &mut Ctx) -> Result<(), FabricError> {
        let value = self
            .red
            .result
            .ok_or_else(|| ctx.fail("all-reduce finished without a result"))?;
        match (self.mode, self.pending, self.phase) {
            (Mode::Dot, _, _) => {}
            (Mode::Jacobian, _, _) => {
                return Err(ctx.fail("all-reduce finished in a Jacobian-only run"))
            }
            (Mode::Cg, Pending::XJx, _) => self.step(ctx, value),
            (Mode::Cg, Pending::Rr, Phase::Setup) => {
                self.rr = value;
                self.initial_rr = value;
                self.phase = Phase::Loop;
                self.enter(ctx, CgState::ThresCheck);
                if value < self.eps {
                    self.finish(ctx, Outcome::Converged);
                } else {
                    self.iter_check(ctx);
                }
            }
            (Mode::Cg, Pending::Rr, Phase::Loop) => self.after_rr(ctx, value),
        }
        Ok(())
    }

    /// ALPHA through DOT_RR.
    fn step(&mut self, ctx: &mut Ctx, x_jx: f32) {
        self.x_jx = x_jx;
        self.enter(ctx, CgState::Alpha);
        if x_jx == 0.0 {
            self.finish(ctx, Outcome::Breakdown);
            return;
        }
        let alpha = self.rr / x_jx;
        self.alpha = alpha;
        self.enter(ctx, CgState::UpdateY);
        let s = &mut self.store;
        for z in 0..s.nz {
            s.y[z] += alpha * s.x[z];
        }
        self.enter(ctx, CgState::UpdateR);
        let s = &mut self.store;
        for z in 0..s.nz {
            s.r[z] -= alpha * s.jx[z];
        }
        for z in 0..self.store.nz {
            if !self.store.dirichlet[z] {
                self.charge(z, cg_vector_work());
            }
        }
        self.dot_rr(ctx);
    }

    fn after_rr(&mut self, ctx: &mut Ctx, rn: f32) {
        self.k += 1;
        if self.record {
            self.y_history.push(self.store.y.clone());
            self.r_history.push(self.store.r.clone());
        }
        let mut rec = Scalars {
            x_jx: self.x_jx,
            alpha: self.alpha,
            rr: rn,
            beta: None,
        };
        self.enter(ctx, CgState::ThresCheck);
        if rn < self.eps {
            self.scalars.push(rec);
            self.rr = rn;
            self.finish(ctx, Outcome::Converged);
            return;
        }
        self.enter(ctx, CgState::Beta);
        let beta = rn / self.rr;
        rec.beta = Some(beta);
        self.scalars.push(rec);
        self.enter(ctx, CgState::UpdateX);
        let s = &mut self.store;
        for z in 0..s.nz {
            s.x[z] = s.r[z] + beta * s.x[z];
        }
        self.rr = rn;
        self.iter_check(ctx);
    }

    fn iter_check(&mut self, ctx: &mut Ctx) {
        self.enter(ctx, CgState::IterCheck);
        if self.k >= self.k_max {
            self.finish(ctx, Outcome::MaxIterations);
        } else {
            self.exchange(ctx, Source::X);
        }
    }

    fn finish(&mut self, ctx: &mut Ctx, outcome: Outcome) {
        self.outcome = Some(outcome);
        let state = if outcome == Outcome::Converged {
            CgState::Converged
        } else {
            CgState::Failed
        };
        self.enter(ctx, state);
    }
}

/// Column dot partial over ascending z, accumulated from zero.
fn partial(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).fold(0.0, |acc, (&x, &y)| acc + x * y)
}
