//! TOML market specifications.
//!
//! ```toml
//! spot = 100.0
//!
//! [curve]                 # parameter curve: start point or evaluation point
//! times = [1.0, 2.0]
//! vols = [0.4, 0.4]
//!
//! [reference_curve]       # optional; prices options whose `price` is omitted
//! times = [1.0, 2.0]
//! vols = [0.2, 0.2]
//!
//! [[options]]
//! strike = 100.0
//! expiry = 1.0
//! price = 7.97
//!
//! [[options]]
//! strike = 105.0
//! expiry = 2.0            # priced from reference_curve
//!
//! [run]                   # optional defaults for the command-line harness
//! algorithms = [1, 2, 3]
//! nmc = [100000, 1000000]
//! seed = 42
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{black_scholes_call, vol_at, EuropeanCall, MarketSpec, VolCurve};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    spot: f64,
    curve: CurveTable,
    reference_curve: Option<CurveTable>,
    options: Vec<OptionRow>,
    #[serde(default)]
    run: RunDefaults,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveTable {
    times: Vec<f64>,
    vols: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptionRow {
    strike: f64,
    expiry: f64,
    price: Option<f64>,
}

/// Harness settings a spec file may carry. Unset fields fall back to
/// command-line flags or built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDefaults {
    pub algorithms: Option<Vec<u8>>,
    pub nmc: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub batch_width: Option<usize>,
    pub threads: Option<usize>,
    pub iterations: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSpec {
    pub market: MarketSpec,
    pub curve: VolCurve,
    pub run: RunDefaults,
}

pub fn load_spec(path: &Path) -> Result<LoadedSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spec(&text, path)
}

/// Parses spec text; `path` only labels errors.
pub fn parse_spec(text: &str, path: &Path) -> Result<LoadedSpec> {
    let config_err = |message: String| Error::Config {
        path: path.to_path_buf(),
        message,
    };
    let file: SpecFile = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
    let curve = VolCurve::new(file.curve.times, file.curve.vols)?;
    let reference = file
        .reference_curve
        .map(|c| VolCurve::new(c.times, c.vols))
        .transpose()?;
    let options = file
        .options
        .into_iter()
        .enumerate()
        .map(|(i, o)| {
            let price = match (o.price, &reference) {
                (Some(p), _) => p,
                (None, Some(r)) => black_scholes_call(file.spot, o.strike, vol_at(r, o.expiry), o.expiry),
                (None, None) => {
                    return Err(config_err(format!(
                        "option {} has no price and there is no reference_curve",
                        i + 1
                    )))
                }
            };
            Ok(EuropeanCall {
                strike: o.strike,
                expiry: o.expiry,
                price,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let market = MarketSpec::new(file.spot, options)?;
    Ok(LoadedSpec {
        market,
        curve,
        run: file.run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixture;

    const SPEC: &str = r#"
        spot = 100.0
        [curve]
        times = [1.0, 2.0, 3.0, 4.0, 5.0]
        vols = [0.4, 0.4, 0.4, 0.4, 0.4]
        [reference_curve]
        times = [1.0, 2.0, 3.0, 4.0, 5.0]
        vols = [0.2, 0.2, 0.2, 0.2, 0.2]
        [[options]]
        strike = 100.0
        expiry = 1.0
        [[options]]
        strike = 105.0
        expiry = 2.0
        [[options]]
        strike = 110.0
        expiry = 3.0
        [[options]]
        strike = 115.0
        expiry = 4.0
        [[options]]
        strike = 120.0
        expiry = 5.0
        [run]
        seed = 7
    "#;

    #[test]
    fn reference_pricing_matches_fixture() {
        let loaded = parse_spec(SPEC, Path::new("inline")).unwrap();
        let (market, start) = fixture::calibration();
        assert_eq!(loaded.market, market);
        assert_eq!(loaded.curve, start);
        assert_eq!(loaded.run.seed, Some(7));
        assert_eq!(loaded.run.nmc, None);
    }

    #[test]
    fn errors_name_the_file() {
        let err = parse_spec("spot = 1.0\nbogus = 2", Path::new("m.toml")).unwrap_err();
        assert!(err.to_string().contains("m.toml"), "{err}");
        let missing_price = "spot = 100.0\n[curve]\ntimes=[1.0]\nvols=[0.2]\n[[options]]\nstrike=1.0\nexpiry=1.0\n";
        assert!(matches!(parse_spec(missing_price, Path::new("x")), Err(Error::Config { .. })));
    }

    #[test]
    fn ships_fixture_files() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
        let table = load_spec(&dir.join("desk_table.toml")).unwrap();
        assert_eq!((table.market, table.curve), fixture::table());
        let calib = load_spec(&dir.join("desk_calibration.toml")).unwrap();
        assert_eq!((calib.market, calib.curve), fixture::calibration());
    }
}
