#![cfg_attr(not(test), no_std)]

//! Core models for analyzing large-scale IPv6 prefix de-aggregation attacks
//! against BGP routers.
//!
//! The crate is split along the stages of such an analysis:
//!
//! - [`topology`]: AS relationships and peering-LAN membership, ingested from
//!   text exports into validated in-memory structures.
//! - [`cones`]: customer cones, provider funnels, and session-multiplied
//!   funneling degrees derived from a topology.
//! - [`ilp`]: 0/1 integer programs for the transit and peering attack
//!   scenarios, with an exact enumerator and a branch-and-bound solver.
//! - [`deagg`]: IPv6 prefix arithmetic, non-aggregatable announcement
//!   schedules, and timed route-event streams.
//! - [`propagation`]: valley-free redistribution of injected routes across
//!   the AS graph.
//! - [`rib`]: router memory profiles, RIB occupancy simulation, and the
//!   memory-alert state machine.
//! - [`defense`]: stateful ingress filters evaluated against announcement
//!   streams.
//!
//! All APIs are deterministic: iteration orders are fixed, and anything
//! randomized takes an explicit seed. The crate is `no_std` (with `alloc`);
//! file formats and IO live in the companion CLI crate.

extern crate alloc;

pub mod cones;
pub mod deagg;
pub mod defense;
pub mod ilp;
pub mod propagation;
pub mod rib;
mod rng;
pub mod topology;
