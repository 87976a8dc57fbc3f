//! Lock-contention laboratory.
//!
//! Two halves that check each other:
//!
//! - [`analytic`]: closed-form conflict, deadlock, thrashing, and
//!   queueing-network formulas for transaction processing under two-phase
//!   locking, with the cubic and quadratic root solvers behind them.
//! - [`engine`]: a deterministic discrete-event simulator of a strict-2PL
//!   transaction system, with pluggable conflict resolution ([`ccpolicy`])
//!   and admission control ([`loadctl`]) over workloads described by
//!   [`workload`].
//!
//! [`cli`] wires both halves into scenario-driven commands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod ccpolicy;
pub mod cli;
pub mod engine;
pub mod loadctl;
pub mod stats;
pub mod workload;
