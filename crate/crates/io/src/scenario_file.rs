//! Scenarios by preset name or from a TOML file.

use std::path::Path;

use whisker_sim::Scenario;

use crate::config::toml_error;
use crate::error::{IoError, Result};

/// A preset when `spec` names one, otherwise a TOML scenario file.
///
/// `seed`, when given, replaces the seed of either.
pub fn load_scenario(spec: &str, seed: Option<u64>) -> Result<Scenario> {
    let mut scenario = match Scenario::preset(spec, seed.unwrap_or(0)) {
        Some(s) => s,
        None => {
            let path = Path::new(spec);
            if !path.exists() {
                return Err(IoError::Invalid(format!(
                    "`{spec}` is neither a scenario file nor a preset ({})",
                    Scenario::PRESETS.join(", ")
                )));
            }
            let text = std::fs::read_to_string(path).map_err(|source| IoError::File { path: path.to_owned(), source })?;
            parse_scenario(&text, path)?
        }
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

pub fn parse_scenario(text: &str, path: &Path) -> Result<Scenario> {
    let s: Scenario = toml::from_str(text).map_err(|e| toml_error(path, text, &e))?;
    s.validate().map_err(|e| IoError::malformed(path, 1, e))?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_take_the_seed() {
        let s = load_scenario("four_phase", Some(7)).unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.annotations.len(), 4);
        assert!(load_scenario("no_such_thing", None).is_err());
    }

    #[test]
    fn serialized_presets_parse_back() {
        for name in Scenario::PRESETS {
            let s = Scenario::preset(name, 4).unwrap();
            let text = toml::to_string(&s).unwrap();
            assert_eq!(parse_scenario(&text, Path::new("s.toml")).unwrap(), s, "{name}");
        }
    }

    #[test]
    fn syntax_errors_are_located() {
        let text = "name = \"x\"\n\n[trajectory\n";
        let e = parse_scenario(text, Path::new("s.toml")).unwrap_err().to_string();
        assert!(e.starts_with("s.toml:3:"), "{e}");
    }
}
