//! Instruction, memory and fabric traffic accounting for one mesh cell, and
//! the arithmetic-intensity arithmetic of the roofline model.
//!
//! Counts are in hardware instructions of the target PE. Traffic is in
//! 32-bit words: `FMUL`, `FSUB` and `FADD` load two operands and store one
//! result, `FNEG` loads one and stores one, `FMA` loads three and stores one,
//! and `FMOV` moves one word from the fabric into memory (one fabric load,
//! one store).

use core::ops::{Add, AddAssign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Fmul,
    Fsub,
    Fneg,
    Fadd,
    Fma,
    Fmov,
}

impl OpKind {
    pub const ALL: [OpKind; 6] = [
        OpKind::Fmul,
        OpKind::Fsub,
        OpKind::Fneg,
        OpKind::Fadd,
        OpKind::Fma,
        OpKind::Fmov,
    ];

    pub fn flops(self) -> u64 {
        match self {
            OpKind::Fma => 2,
            OpKind::Fmov => 0,
            _ => 1,
        }
    }

    /// `(memory loads, memory stores, fabric loads)` per instruction.
    pub fn traffic(self) -> (u64, u64, u64) {
        match self {
            OpKind::Fmul | OpKind::Fsub | OpKind::Fadd => (2, 1, 0),
            OpKind::Fneg => (1, 1, 0),
            OpKind::Fma => (3, 1, 0),
            OpKind::Fmov => (0, 1, 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Fmul => "fmul",
            OpKind::Fsub => "fsub",
            OpKind::Fneg => "fneg",
            OpKind::Fadd => "fadd",
            OpKind::Fma => "fma",
            OpKind::Fmov => "fmov",
        }
    }
}

/// Instruction counts by kind plus the traffic they imply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct OpCounts {
    pub fmul: u64,
    pub fsub: u64,
    pub fneg: u64,
    pub fadd: u64,
    pub fma: u64,
    pub fmov: u64,
    pub loads: u64,
    pub stores: u64,
    pub fabric_loads: u64,
}

impl OpCounts {
    pub const ZERO: OpCounts = OpCounts {
        fmul: 0,
        fsub: 0,
        fneg: 0,
        fadd: 0,
        fma: 0,
        fmov: 0,
        loads: 0,
        stores: 0,
        fabric_loads: 0,
    };

    /// Builds counts from `(kind, n)` pairs, traffic included.
    pub fn of(mix: &[(OpKind, u64)]) -> Self {
        let mut c = Self::ZERO;
        for &(k, n) in mix {
            c.charge(k, n);
        }
        c
    }

    pub fn charge(&mut self, kind: OpKind, n: u64) {
        *self.slot(kind) += n;
        let (l, s, f) = kind.traffic();
        self.loads += l * n;
        self.stores += s * n;
        self.fabric_loads += f * n;
    }

    fn slot(&mut self, kind: OpKind) -> &mut u64 {
        match kind {
            OpKind::Fmul => &mut self.fmul,
            OpKind::Fsub => &mut self.fsub,
            OpKind::Fneg => &mut self.fneg,
            OpKind::Fadd => &mut self.fadd,
            OpKind::Fma => &mut self.fma,
            OpKind::Fmov => &mut self.fmov,
        }
    }

    pub fn count(&self, kind: OpKind) -> u64 {
        match kind {
            OpKind::Fmul => self.fmul,
            OpKind::Fsub => self.fsub,
            OpKind::Fneg => self.fneg,
            OpKind::Fadd => self.fadd,
            OpKind::Fma => self.fma,
            OpKind::Fmov => self.fmov,
        }
    }

    pub fn flops(&self) -> u64 {
        OpKind::ALL.iter().map(|&k| k.flops() * self.count(k)).sum()
    }

    pub fn memory_accesses(&self) -> u64 {
        self.loads + self.stores
    }

    /// Every field multiplied by `n`.
    pub fn times(&self, n: u64) -> Self {
        Self {
            fmul: self.fmul * n,
            fsub: self.fsub * n,
            fneg: self.fneg * n,
            fadd: self.fadd * n,
            fma: self.fma * n,
            fmov: self.fmov * n,
            loads: self.loads * n,
            stores: self.stores * n,
            fabric_loads: self.fabric_loads * n,
        }
    }
}

impl Add for OpCounts {
    type Output = OpCounts;

    fn add(mut self, o: OpCounts) -> OpCounts {
        self += o;
        self
    }
}

impl AddAssign for OpCounts {
    fn add_assign(&mut self, o: OpCounts) {
        self.fmul += o.fmul;
        self.fsub += o.fsub;
        self.fneg += o.fneg;
        self.fadd += o.fadd;
        self.fma += o.fma;
        self.fmov += o.fmov;
        self.loads += o.loads;
        self.stores += o.stores;
        self.fabric_loads += o.fabric_loads;
    }
}

impl core::iter::Sum for OpCounts {
    fn sum<I: Iterator<Item = OpCounts>>(iter: I) -> Self {
        iter.fold(OpCounts::ZERO, |a, b| a + b)
    }
}

/// Instruction mix of one neighbor term of the Jacobian product.
pub fn neighbor_term() -> OpCounts {
    OpCounts::of(&[
        (OpKind::Fmul, 6),
        (OpKind::Fsub, 4),
        (OpKind::Fneg, 1),
        (OpKind::Fadd, 1),
        (OpKind::Fma, 1),
    ])
}

/// One neighbor word pulled off the fabric.
pub fn fabric_word() -> OpCounts {
    OpCounts::of(&[(OpKind::Fmov, 1)])
}

/// Per-cell work of one CG iteration outside the Jacobian product: the
/// vector updates, dot-product partials, and the four reduction/broadcast
/// fabric loads.
pub fn cg_vector_work() -> OpCounts {
    OpCounts::of(&[(OpKind::Fmul, 2), (OpKind::Fma, 5), (OpKind::Fmov, 4)])
}

/// Expected counts for one interior, non-Dirichlet cell per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellModel {
    /// Six neighbor terms plus four neighbor words from the fabric.
    pub jacobian: OpCounts,
    pub rest: OpCounts,
}

impl CellModel {
    pub fn total(&self) -> OpCounts {
        self.jacobian + self.rest
    }
}

pub fn per_cell_model() -> CellModel {
    CellModel {
        jacobian: neighbor_term().times(6) + fabric_word().times(4),
        rest: cg_vector_work(),
    }
}

/// Tallies of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PerfCounters {
    pub ops: OpCounts,
    /// Cells whose unknown CG iterated on (non-Dirichlet).
    pub cells: u64,
    pub iterations: u64,
    pub ticks: u64,
    /// Raw neighbor-exchange data words delivered.
    pub exchange_words: u64,
    /// Raw all-reduce packets delivered, control packets included.
    pub reduce_packets: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PerfError {
    #[error("no floating-point work was counted")]
    NoFlops,
    #[error("no memory traffic was counted")]
    NoMemoryTraffic,
    #[error("no fabric traffic was counted")]
    NoFabricTraffic,
    #[error("elapsed time must be positive and finite")]
    BadElapsed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RooflinePoint {
    pub flops: u64,
    pub memory_bytes: u64,
    pub fabric_bytes: u64,
    /// FLOPs per byte of memory traffic.
    pub ai_memory: f64,
    /// FLOPs per byte of fabric traffic.
    pub ai_fabric: f64,
    /// Billions of cell updates per second, given an elapsed time.
    pub throughput_gcells: Option<f64>,
    pub gflops: Option<f64>,
}

const WORD_BYTES: u64 = 4;

/// Places counts on the roofline. With `elapsed_seconds`, also reports
/// cell-update and FLOP rates over `cells * iterations`; these are model
/// outputs for whatever time is supplied, not measurements.
pub fn roofline(
    counters: &PerfCounters,
    elapsed_seconds: Option<f64>,
) -> Result<RooflinePoint, PerfError> {
    let ops = &counters.ops;
    let flops = ops.flops();
    if flops == 0 {
        return Err(PerfError::NoFlops);
    }
    let memory_bytes = WORD_BYTES * ops.memory_accesses();
    let fabric_bytes = WORD_BYTES * ops.fabric_loads;
    if memory_bytes == 0 {
        return Err(PerfError::NoMemoryTraffic);
    }
    if fabric_bytes == 0 {
        return Err(PerfError::NoFabricTraffic);
    }
    let (throughput_gcells, gflops) = match elapsed_seconds {
        Some(t) if t > 0.0 && t.is_finite() => (
            Some((counters.cells * counters.iterations) as f64 / t / 1e9),
            Some(flops as f64 / t / 1e9),
        ),
        Some(_) => return Err(PerfError::BadElapsed),
        None => (None, None),
    };
    Ok(RooflinePoint {
        flops,
        memory_bytes,
        fabric_bytes,
        ai_memory: flops as f64 / memory_bytes as f64,
        ai_fabric: flops as f64 / fabric_bytes as f64,
        throughput_gcells,
        gflops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let m = per_cell_model();
        assert_eq!(
            (
                m.jacobian.fmul,
                m.jacobian.fsub,
                m.jacobian.fneg,
                m.jacobian.fadd,
                m.jacobian.fma,
                m.jacobian.fmov
            ),
            (36, 24, 6, 6, 6, 4)
        );
        assert_eq!((m.rest.fmul, m.rest.fma, m.rest.fmov), (2, 5, 4));
        assert_eq!(m.jacobian.flops(), 84);
        assert_eq!(m.rest.flops(), 12);
        assert_eq!(neighbor_term().flops(), 14);
    }

    #[test]
    fn totals_and_intensity() {
        let t = per_cell_model().total();
        assert_eq!(t.flops(), 96);
        assert_eq!(t.memory_accesses(), 268);
        assert_eq!(t.fabric_loads, 8);
        let c = PerfCounters {
            ops: t,
            cells: 1,
            iterations: 1,
            ..Default::default()
        };
        let p = roofline(&c, None).unwrap();
        assert_eq!(p.ai_memory, 96.0 / 1072.0);
        assert!((p.ai_memory - 0.0895).abs() < 1e-4);
        assert_eq!(p.ai_fabric, 3.0);
        assert_eq!(p.throughput_gcells, None);
        let p = roofline(&c, Some(1e-9)).unwrap();
        assert!((p.throughput_gcells.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn roofline_errors() {
        assert_eq!(
            roofline(&PerfCounters::default(), None),
            Err(PerfError::NoFlops)
        );
        let only_flops = PerfCounters {
            ops: neighbor_term(),
            ..Default::default()
        };
        assert_eq!(roofline(&only_flops, None), Err(PerfError::NoFabricTraffic));
        let c = PerfCounters {
            ops: per_cell_model().total(),
            ..Default::default()
        };
        assert_eq!(roofline(&c, Some(0.0)), Err(PerfError::BadElapsed));
    }

    #[test]
    fn flops_identity() {
        let c = OpCounts::of(&[
            (OpKind::Fmul, 3),
            (OpKind::Fsub, 5),
            (OpKind::Fneg, 7),
            (OpKind::Fadd, 11),
            (OpKind::Fma, 13),
            (OpKind::Fmov, 17),
        ]);
        assert_eq!(c.flops(), 3 + 5 + 7 + 11 + 2 * 13);
    }
}
