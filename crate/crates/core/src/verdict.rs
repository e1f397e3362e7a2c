use serde::{Deserialize, Serialize};

/// How a verdict about an infinite object was reached.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Evidence {
    /// Finite computation with exact arithmetic.
    Exact,
    /// Closed-form tail argument (eventual periodicity or a schedule).
    ClosedForm,
    /// A partial product or sum crossed a configured threshold.
    Threshold,
    /// Trend in finitely many partial sums; not a proof.
    PartialSums,
    Inconclusive,
}
