//! Strict unit-bearing quantity parsing for scenario files.
//!
//! Every dimensioned number is written as `"<magnitude> <unit>"`; bare
//! numbers are rejected so that a missing `ns` vs `MHz` cannot slip through
//! silently.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum UnitError {
    #[error("empty quantity string")]
    Empty,
    #[error("missing unit in {0:?} (bare numbers are rejected)")]
    MissingUnit(String),
    #[error("malformed magnitude in {0:?}")]
    BadMagnitude(String),
    #[error("unknown {kind} unit {unit:?} in {input:?}")]
    UnknownUnit {
        kind: &'static str,
        unit: String,
        input: String,
    },
}

pub type Result<T> = std::result::Result<T, UnitError>;

fn split(input: &str) -> Result<(f64, &str)> {
    let s = input.trim();
    if s.is_empty() {
        return Err(UnitError::Empty);
    }
    let end = s
        .find(|c: char| !(c.is_ascii_digit() || "+-.eE".contains(c)))
        .ok_or_else(|| UnitError::MissingUnit(input.to_string()))?;
    // 'e' may end the magnitude if followed by the unit (e.g. "2 eV"); only
    // digits/sign may follow an exponent marker
    let (mag, unit) = s.split_at(end);
    let mag: f64 = mag
        .trim()
        .parse()
        .map_err(|_| UnitError::BadMagnitude(input.to_string()))?;
    let unit = unit.trim();
    if unit.is_empty() {
        return Err(UnitError::MissingUnit(input.to_string()));
    }
    Ok((mag, unit))
}

/// Duration in seconds; accepts ps/ns/us/µs/ms/s/min/h.
pub fn parse_time(input: &str) -> Result<f64> {
    let (mag, unit) = split(input)?;
    let scale = match unit {
        "ps" => 1e-12,
        "ns" => 1e-9,
        "us" | "µs" => 1e-6,
        "ms" => 1e-3,
        "s" => 1.0,
        "min" => 60.0,
        "h" => 3600.0,
        _ => {
            return Err(UnitError::UnknownUnit {
                kind: "time",
                unit: unit.to_string(),
                input: input.to_string(),
            })
        }
    };
    Ok(mag * scale)
}

/// Frequency in Hz; accepts Hz/kHz/MHz/GHz/THz.
pub fn parse_frequency(input: &str) -> Result<f64> {
    let (mag, unit) = split(input)?;
    let scale = match unit {
        "Hz" => 1.0,
        "kHz" => 1e3,
        "MHz" => 1e6,
        "GHz" => 1e9,
        "THz" => 1e12,
        _ => {
            return Err(UnitError::UnknownUnit {
                kind: "frequency",
                unit: unit.to_string(),
                input: input.to_string(),
            })
        }
    };
    Ok(mag * scale)
}

/// Optical pump power in milliwatts; accepts uW/µW/mW/W.
pub fn parse_power_mw(input: &str) -> Result<f64> {
    let (mag, unit) = split(input)?;
    let scale = match unit {
        "uW" | "µW" => 1e-3,
        "mW" => 1.0,
        "W" => 1e3,
        _ => {
            return Err(UnitError::UnknownUnit {
                kind: "power",
                unit: unit.to_string(),
                input: input.to_string(),
            })
        }
    };
    Ok(mag * scale)
}

/// Event rate in 1/s; accepts Hz, /s, /min, /h.
pub fn parse_rate(input: &str) -> Result<f64> {
    let (mag, unit) = split(input)?;
    let scale = match unit {
        "Hz" | "/s" => 1.0,
        "/min" => 1.0 / 60.0,
        "/h" => 1.0 / 3600.0,
        _ => {
            return Err(UnitError::UnknownUnit {
                kind: "rate",
                unit: unit.to_string(),
                input: input.to_string(),
            })
        }
    };
    Ok(mag * scale)
}

/// Pair rate per pump power, in 1/(s·mW); accepts `/s/mW`.
pub fn parse_rate_per_mw(input: &str) -> Result<f64> {
    let (mag, unit) = split(input)?;
    match unit {
        "/s/mW" | "/(s*mW)" | "/(s mW)" => Ok(mag),
        _ => Err(UnitError::UnknownUnit {
            kind: "rate-per-power",
            unit: unit.to_string(),
            input: input.to_string(),
        }),
    }
}

/// Angle in radians; accepts rad/mrad/deg.
pub fn parse_angle(input: &str) -> Result<f64> {
    let (mag, unit) = split(input)?;
    let scale = match unit {
        "rad" => 1.0,
        "mrad" => 1e-3,
        "deg" => std::f64::consts::PI / 180.0,
        _ => {
            return Err(UnitError::UnknownUnit {
                kind: "angle",
                unit: unit.to_string(),
                input: input.to_string(),
            })
        }
    };
    Ok(mag * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn accepts_units() {
        assert_abs_diff_eq!(parse_time("25 ns").unwrap(), 25e-9);
        assert_abs_diff_eq!(parse_time("2 h").unwrap(), 7200.0);
        assert_abs_diff_eq!(parse_time("0.5ns").unwrap(), 0.5e-9);
        assert_abs_diff_eq!(parse_frequency("40 MHz").unwrap(), 40e6);
        assert_abs_diff_eq!(parse_power_mw("3 mW").unwrap(), 3.0);
        assert_abs_diff_eq!(parse_power_mw("0.2 W").unwrap(), 200.0);
        assert_abs_diff_eq!(parse_rate("3 /min").unwrap(), 0.05);
        assert_abs_diff_eq!(parse_rate("100 Hz").unwrap(), 100.0);
        assert_abs_diff_eq!(parse_rate_per_mw("52.4 /s/mW").unwrap(), 52.4);
        assert_abs_diff_eq!(parse_angle("45 deg").unwrap(), std::f64::consts::FRAC_PI_4);
        assert_abs_diff_eq!(parse_time("1e3 s").unwrap(), 1000.0);
    }

    #[test]
    fn rejects_bare_numbers_and_garbage() {
        assert!(matches!(parse_time("25"), Err(UnitError::MissingUnit(_))));
        assert!(matches!(parse_time(""), Err(UnitError::Empty)));
        assert!(matches!(
            parse_time("25 parsec"),
            Err(UnitError::UnknownUnit { .. })
        ));
        assert!(matches!(
            parse_frequency("40 ns"),
            Err(UnitError::UnknownUnit { .. })
        ));
        assert!(matches!(parse_time("abc ns"), Err(UnitError::BadMagnitude(_))));
    }
}
