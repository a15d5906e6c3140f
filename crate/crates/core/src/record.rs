//! One row of run diagnostics and its CSV form.
//!
//! The column list is the single source for the CSV header, the units line
//! and the committed schema file `data/diagnostics_schema.json`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_FORMAT: &str = "patchflow-diagnostics";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Column {
    pub name: &'static str,
    pub unit: &'static str,
    pub description: &'static str,
}

macro_rules! record {
    ($( #[doc = $doc:literal] $name:ident : $unit:literal ),* $(,)?) => {
        /// Diagnostics at one sample time; absent entries do not apply to the run.
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
        pub struct DiagnosticsRecord {
            $( #[doc = $doc] pub $name: Option<f64>, )*
        }

        pub const COLUMNS: &[Column] = &[
            $( Column { name: stringify!($name), unit: $unit, description: $doc.trim_ascii() }, )*
        ];

        impl DiagnosticsRecord {
            pub fn values(&self) -> Vec<Option<f64>> {
                vec![$( self.$name ),*]
            }

            fn set(&mut self, column: &str, value: Option<f64>) -> bool {
                match column {
                    $( stringify!($name) => { self.$name = value; true } )*
                    _ => false,
                }
            }
        }
    };
}

record! {
    /// Simulation time.
    t: "time",
    /// Solver steps taken so far.
    step: "1",
    /// Kinetic plus potential energy plus accumulated dissipation.
    energy: "energy",
    /// int rho |u|^2 / 2
    kinetic: "energy",
    /// int H_1(rho)
    potential: "energy",
    /// int_0^t (mu ||grad u||^2 + (mu + lambda) ||div u||^2)
    dissipation: "energy",
    /// (mu/2) ||grad u||^2 + ((mu+lambda)/2) ||div u||^2 + int_0^t ||sqrt(rho) u_dot||^2
    a1: "energy/time",
    /// sigma ||sqrt(rho) u_dot||^2 + int_0^t sigma (mu ||grad u_dot||^2 + (mu+lambda)/nu^2 ||F_dot||^2)
    a2: "energy/time^2",
    /// The second functional with sigma replaced by 1.
    a2_unweighted: "energy/time^2",
    /// 1 while the vacuum fraction has stayed below the reliability limit, else 0.
    a2_reliable: "1",
    /// ||F_dot||_2 over cells above the density floor.
    fdot_l2: "pressure/time",
    /// ||X||_{inf,p} + sup_v ||d_{X_v} rho||_p
    a3: "1",
    /// ||X||_{inf,p} + sup_v ||div(rho X_v)||_p
    a3_divergence_form: "1",
    /// ||X||_{inf,p}
    family_norm: "1",
    /// sup_v ||d_{X_v} rho||_p
    directional: "density/length",
    /// I(X): grid minimum of the largest member magnitude.
    nondegeneracy: "1",
    /// ||div(rho X_1)||_p
    div_rho_x: "density/length",
    /// ||G||_2
    g_l2: "pressure*length",
    /// ||F||_2
    f_l2: "pressure*length",
    /// ||F||_inf
    f_inf: "pressure",
    /// ||grad F||_2
    grad_f_l2: "pressure",
    /// ||rho u_dot||_2
    momentum_rate_l2: "pressure",
    /// ||u_dot||_2
    udot_l2: "length^2/time^2",
    /// Share of the fluctuation energy of F removed by the 2/3 rule.
    f_high_band: "1",
    /// Share of the fluctuation energy of G removed by the 2/3 rule.
    g_high_band: "1",
    /// ||div u||_2
    div_l2: "length/time",
    /// ||div u||_inf
    div_inf: "1/time",
    /// nu ||div u||_2^2
    nu_div_sq: "energy/time",
    /// ||grad u||_2
    grad_u_l2: "length/time",
    /// ||grad u||_inf as the largest pointwise operator norm.
    grad_u_inf: "1/time",
    /// int_0^t ||grad u||_inf
    lipschitz_integral: "1",
    /// int_0^t ||div u||_inf
    compression_integral: "1",
    /// ||grad u_tilde + grad u_G - grad u||_2 / ||grad u||_2
    decomposition_residual: "1",
    /// ||grad u_G||_inf = ||R R G||_inf / nu
    grad_u_pressure_inf: "1/time",
    /// ||R R G||_inf / (||G||_q + ||G||_inf (1 + log(e + ||G||_striated / ||G||_inf)))
    log_riesz_ratio: "1",
    /// ||rho u_dot - grad F - mu Lap u|| in homogeneous H^{-1}
    momentum_residual_hm1: "pressure*length",
    /// Total mass.
    mass: "density*length^2",
    /// Grid minimum of rho.
    rho_min: "density",
    /// Grid maximum of rho.
    rho_max: "density",
    /// ||rho - rho_tilde||_inf
    rho_deviation_inf: "density",
    /// ||rho_0 - rho_tilde||_inf + (rho_star/nu) int_0^t ||F||_inf - ||rho - rho_tilde||_inf
    density_bound_margin: "density",
    /// Share of cells below the density floor.
    vacuum_fraction: "1",
    /// max |X_1 . n| / |X_1| over the interface markers.
    tangency_error: "1",
    /// Interface length.
    arclength: "length",
    /// Largest interface curvature.
    curvature_max: "1/length",
    /// (oint |kappa|^p ds)^(1/p)
    w2p_seminorm: "1/length",
    /// Area enclosed by the markers.
    enclosed_area: "length^2",
}

/// Schema document written to `data/diagnostics_schema.json`.
pub fn schema_json() -> String {
    #[derive(Serialize)]
    struct Schema {
        format: &'static str,
        version: u32,
        header_lines: [&'static str; 3],
        missing_value: &'static str,
        columns: &'static [Column],
    }
    let doc = Schema {
        format: SCHEMA_FORMAT,
        version: SCHEMA_VERSION,
        header_lines: ["# config_hash=<sha256 hex>", "# units=<unit per column>", "<column names>"],
        missing_value: "",
        columns: COLUMNS,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("schema serializes");
    s.push('\n');
    s
}

pub fn csv_header(config_hash: &str) -> String {
    let units: Vec<&str> = COLUMNS.iter().map(|c| c.unit).collect();
    let names: Vec<&str> = COLUMNS.iter().map(|c| c.name).collect();
    format!("# config_hash={config_hash}\n# units={}\n{}\n", units.join(","), names.join(","))
}

/// Shortest round-tripping decimal; nothing for absent values.
pub fn csv_row(record: &DiagnosticsRecord) -> String {
    let mut out = String::new();
    for (k, v) in record.values().into_iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        if let Some(v) = v {
            write!(out, "{v:e}").expect("string write");
        }
    }
    out.push('\n');
    out
}

/// Parses a CSV written by [`csv_header`] and [`csv_row`]; returns the hash and rows.
pub fn parse_csv(text: &str) -> Result<(String, Vec<DiagnosticsRecord>)> {
    let mut lines = text.lines();
    let bad = |m: &str| Error::InvalidParameter(format!("diagnostics csv: {m}"));
    let hash = lines
        .next()
        .and_then(|l| l.strip_prefix("# config_hash="))
        .ok_or_else(|| bad("missing config hash line"))?
        .to_string();
    lines
        .next()
        .filter(|l| l.starts_with("# units="))
        .ok_or_else(|| bad("missing units line"))?;
    let names: Vec<&str> = lines.next().ok_or_else(|| bad("missing column names"))?.split(',').collect();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() {
            return Err(bad(&format!("row {} has {} cells, expected {}", n + 1, cells.len(), names.len())));
        }
        let mut r = DiagnosticsRecord::default();
        for (name, cell) in names.iter().zip(cells) {
            let v = if cell.is_empty() {
                None
            } else {
                Some(cell.parse::<f64>().map_err(|e| bad(&format!("row {}, {name}: {e}", n + 1)))?)
            };
            if !r.set(name, v) {
                return Err(bad(&format!("unknown column {name}")));
            }
        }
        rows.push(r);
    }
    Ok((hash, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn committed_schema_is_current() {
        let committed = include_str!("../data/diagnostics_schema.json");
        assert_eq!(committed, schema_json(), "regenerate data/diagnostics_schema.json");
    }

    #[test]
    fn csv_round_trip() {
        let r = DiagnosticsRecord {
            t: Some(0.1),
            energy: Some(1.0 / 3.0),
            a2_reliable: Some(1.0),
            tangency_error: None,
            ..Default::default()
        };
        let text = csv_header("abc") + &csv_row(&r) + &csv_row(&r);
        let (hash, rows) = parse_csv(&text).unwrap();
        assert_eq!(hash, "abc");
        assert_eq!(rows, vec![r.clone(), r]);
    }

    #[test]
    fn names_are_unique() {
        let mut names: Vec<_> = COLUMNS.iter().map(|c| c.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), COLUMNS.len());
    }
}
