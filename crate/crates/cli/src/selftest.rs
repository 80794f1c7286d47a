//! Fast closed-form checks of the numerical core.

use switchlab::control::periodic_chi;
use switchlab::measure::{lyapunov_chi, InvariantMeasure};
use switchlab::simulate::{estimate_chi_mc, jump_count_mgf, SwitchingLaw};
use switchlab::system::{Mode, SystemParams};

use crate::output::Table;
use crate::{CliError, Outcome, RunContext};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn pass(&self) -> bool {
        (self.value - self.expected).abs() <= self.tolerance
    }
}

pub fn checks(seed: u64) -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    let flat = SystemParams::degenerate(0.2, 1.0, 1.5, 0.3)?;
    out.push(Check {
        name: "degenerate chi equals -a",
        value: lyapunov_chi(&flat)?.value,
        expected: -0.2,
        tolerance: 1e-9,
    });
    let det = SystemParams::new(0.1, 2.0, 4.0 / std::f64::consts::PI, 0.5)?;
    out.push(Check {
        name: "periodic exponent at beta = 4/pi",
        value: periodic_chi(&det).chi_d,
        expected: -0.1 + 4f64.ln() / std::f64::consts::PI,
        tolerance: 1e-10,
    });
    let res = SystemParams::new(0.1, 2.0, 2.0 / std::f64::consts::PI, 0.5)?;
    out.push(Check {
        name: "periodic exponent at beta = 2/pi",
        value: periodic_chi(&res).chi_d,
        expected: -0.1,
        tolerance: 1e-12,
    });
    out.push(Check {
        name: "jump-count mgf at equal rates",
        value: jump_count_mgf(1.3, 2.0, 1.5, 1.5, Mode::Zero),
        expected: (1.5f64 * 2.0 * 0.3).exp(),
        tolerance: 1e-12,
    });
    let p = SystemParams::new(0.15, 3.0, 2.0, 0.5)?;
    let m = InvariantMeasure::new(&p)?;
    let dp = m.density_pair()?;
    out.push(Check {
        name: "invariant measure normalization",
        value: dp.total_mass()?,
        expected: 1.0,
        tolerance: 1e-8,
    });
    out.push(Check {
        name: "chi formula against ergodic average",
        value: m.chi_formula(),
        expected: m.chi_ergodic()?,
        tolerance: 1e-6,
    });
    let a = estimate_chi_mc(&p, SwitchingLaw::Exponential, 200.0, 8, seed)?;
    let b = estimate_chi_mc(&p, SwitchingLaw::Exponential, 200.0, 8, seed)?;
    out.push(Check {
        name: "seeded Monte Carlo repeats exactly",
        value: a.value,
        expected: b.value,
        tolerance: 0.0,
    });
    Ok(out)
}

pub fn cmd_selftest(ctx: &RunContext) -> Result<Outcome, CliError> {
    let checks = checks(ctx.seed)?;
    let mut table = Table::new(
        "selftest",
        &["check", "value", "expected", "tolerance", "pass"],
    );
    let mut out = Outcome::default();
    for c in &checks {
        table.push(vec![
            c.name.into(),
            c.value.into(),
            c.expected.into(),
            c.tolerance.into(),
            c.pass().to_string().into(),
        ]);
        out.summary.push(format!(
            "{} {}: {:.12} vs {:.12}",
            if c.pass() { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.expected
        ));
    }
    out.failed_checks = checks.iter().filter(|c| !c.pass()).count();
    out.artifacts.table(&table, ctx.format);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in checks(1).unwrap() {
            assert!(c.pass(), "{c:?}");
        }
    }
}
