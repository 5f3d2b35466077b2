//! Unsupervised surfacing of likely gender bias in comments addressed to a
//! known person.
//!
//! The pipeline trains a classifier to predict the gender of the addressee
//! from comment text alone, while demoting everything that is predictive of
//! gender without being indicative of bias:
//!
//! - the addressee's own post content, controlled by propensity matching
//!   over post text ([`propensity`]);
//! - latent addressee traits, demoted adversarially against per-comment
//!   confound vectors built from log-odds word statistics ([`lexstats`],
//!   [`biasmodel`]);
//! - overt gendered terms and addressee names, neutralized by word
//!   substitution ([`corpus`]).
//!
//! Comments the trained model still assigns a high feminine prediction score
//! are the ones flagged as likely to contain bias; [`analysis`] characterizes
//! them, [`evalharness`] scores held-out and transfer performance, and
//! [`synthgen`] generates corpora with planted ground truth so every claim
//! can be checked at desk scale. [`pipeline`] ties the stages together behind
//! a config file; the `biaslens` binary is a thin wrapper over it.

pub mod analysis;
pub mod biasmodel;
pub mod corpus;
pub mod error;
pub mod evalharness;
pub mod lexstats;
pub mod nn;
pub mod pipeline;
pub mod propensity;
pub mod report;
pub mod synthgen;

pub use error::{Error, Result};
