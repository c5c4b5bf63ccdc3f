//! Simulation-based radiocarbon fine-dating.
//!
//! Reference tables of simulated ages for known calendar dates are matched
//! exactly against measured ages; twelve central-tendency indicators summarise
//! the matched dates, and the `evaluate` and `lookup` modules grade how reliable
//! each indicator is.

pub mod calcurve;
pub mod cli;
pub mod error;
pub mod evaluate;
pub mod finedate;
pub mod lookup;
pub mod reftable;
pub mod rng;
pub mod simulate;
pub mod table_io;

pub use calcurve::{calibrate, CalCurve, CalendarDate, CalibrationResult, Calibrator, Measurement};
pub use error::{Error, Result};
pub use finedate::{compute_indicators, match_measurements, Indicator, IndicatorSet, MatchSet};
pub use reftable::{build_combo_table, build_reference_table, RefTable, RefTableSpec};
pub use simulate::{r_simulate, Simulator};
