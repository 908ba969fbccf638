use std::path::Path;
use std::time::Instant;

use mems_core::dielectric::{check_transmission_compat, Sigma1Profile};
use mems_core::diagnostics::{
    all_passed, compare_flat_plate, gradient_check, gradient_tolerance, manufactured_study,
    CheckReport,
};
use mems_core::minimizing_movements::Scheme;

use crate::simulate::load;
use crate::{EXIT_CONFIG, EXIT_FAILURE};

/// Sup-norm tolerance of the flat-plate comparison; the discrete solution is
/// exact there up to round-off.
const FLAT_TOL: f64 = 1e-8;
const MMS_ORDER: f64 = 1.9;
const COMPAT_TOL: f64 = 1e-10;

pub fn cmd_oracle(config: &Path, quiet: bool) -> u8 {
    let v = match load(config, quiet) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let scheme = match Scheme::from_validation(&v) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return EXIT_CONFIG;
        }
    };
    let reports = match oracle_suite(&scheme, v.config.sigma1, v.config.w_max) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("oracle failed: {e}");
            return EXIT_FAILURE;
        }
    };
    if !quiet {
        print_table(&reports);
    }
    if all_passed(&reports) {
        0
    } else {
        EXIT_FAILURE
    }
}

pub fn print_table(reports: &[CheckReport]) {
    println!(
        "{:<28} {:<6} {:>12} {:>12} {:>10}  context",
        "check", "status", "measured", "bound", "tol"
    );
    for r in reports {
        println!(
            "{:<28} {:<6} {:>12.4e} {:>12.4e} {:>10.2e}  {}",
            r.name,
            if r.passed { "pass" } else { "FAIL" },
            r.measured,
            r.bound,
            r.tolerance,
            r.context
        );
    }
}

fn oracle_suite(
    scheme: &Scheme,
    sigma1: Sigma1Profile,
    w_max: f64,
) -> Result<Vec<CheckReport>, Box<dyn std::error::Error>> {
    let mut out = Vec::new();
    let es = &scheme.electrostatics;
    let grid = scheme.grid();
    let gap = scheme.physical.gap;

    let compat = check_transmission_compat(&es.bdata, &es.perm, 21, w_max);
    out.push(CheckReport::new(
        "boundary_data_compat",
        compat.max_violation(),
        0.0,
        COMPAT_TOL,
        "sampled on [-L, L] x [-H, w_max]",
    ));

    // The column-wise closed form solves the full problem only when sigma1
    // does not vary along the beam.
    if matches!(sigma1, Sigma1Profile::Constant { .. }) {
        for w in [0.0, -0.5 * gap] {
            let start = Instant::now();
            let cmp = compare_flat_plate(es, grid, w)?;
            let ctx = format!("w = {w}, {:.2} s", start.elapsed().as_secs_f64());
            out.push(CheckReport::new("flat_plate_potential", cmp.potential, 0.0, FLAT_TOL, &ctx));
            out.push(CheckReport::new("flat_plate_force", cmp.force, 0.0, FLAT_TOL, &ctx));
            out.push(CheckReport::new("flat_plate_energy", cmp.energy, 0.0, FLAT_TOL, &ctx));
        }
    } else {
        out.push(CheckReport::new(
            "flat_plate",
            0.0,
            0.0,
            0.0,
            "skipped: sigma1 varies in x, no closed form",
        ));
    }

    let mms = manufactured_study(3)?;
    for pair in mms.windows(2) {
        let ((n0, e0), (n1, e1)) = (pair[0], pair[1]);
        let order = (e0 / e1).ln() / (n1 as f64 / n0 as f64).ln();
        out.push(CheckReport::new(
            "manufactured_order_shortfall",
            MMS_ORDER - order,
            0.0,
            0.0,
            format!("order {order:.3} from n_x {n0} to {n1}"),
        ));
    }

    let tol = gradient_tolerance(grid.n);
    let rows = gradient_check(es, grid, &[1e-3])?;
    for r in rows {
        out.push(CheckReport::new(
            "gradient_check",
            r.relative_error,
            tol,
            0.0,
            format!(
                "s = {:e}, n_x = {}, tolerance {tol:e} from the mesh schedule",
                r.s, grid.n
            ),
        ));
    }
    Ok(out)
}
