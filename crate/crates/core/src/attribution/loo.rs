use super::{finish, require_units, MaskEvaluator};
use crate::error::Result;
use crate::scalarize::Scalarizer;
use crate::scores::AttributionResult;
use crate::unit::{PerturbationMask, UnitSet};

/// Leave-one-out: `xi_s = S(x) - S(x without s)`, with `d + 1` evaluations.
pub fn loo(unit_set: &UnitSet, scalarizer: &dyn Scalarizer) -> Result<AttributionResult> {
    let d = require_units(unit_set)?;
    let before = scalarizer.ledger().model_calls();
    let mut masks = vec![PerturbationMask::ones(d)];
    masks.extend((0..d).map(|s| PerturbationMask::dropping(d, [s])));
    let mut ev = MaskEvaluator::new(unit_set, scalarizer);
    let vals = ev.evaluate(&masks)?;
    let scores = (0..d).map(|s| vals[0] - vals[s + 1]).collect();
    finish(unit_set, scalarizer, "loo", scores, before, ev.evaluations())
}
