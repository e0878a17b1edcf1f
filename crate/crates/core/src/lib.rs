//! Finite probabilistic CSP: terms, their probabilistic transition systems, testing outcomes,
//! simulation preorders, modal characterisations and the inequational theories.

pub mod axioms;
pub mod corpus;
pub mod distribution;
pub mod geometry;
pub mod logic;
pub mod lp;
pub mod plts;
pub mod rational;
pub mod resolutions;
pub mod simulation;
pub mod syntax;
pub mod testing;

pub use distribution::{interp, Dist, LiftWitness};
pub use geometry::{Mode, Order, OutcomeSet, Point};
pub use plts::{Derivatives, DistPolytope, Plts, SDist, StateId};
pub use rational::Q;
pub use syntax::{parse, ActSet, Action, Label, Name, Term, TermClass};
