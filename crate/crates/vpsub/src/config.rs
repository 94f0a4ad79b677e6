//! Flat `key = value` configuration files.
//!
//! Keys are long flag names of the chosen subcommand (`eta-d` and `eta_d`
//! are the same key). Values are spliced into the argument list right after
//! the subcommand, so flags given on the command line take precedence.

use std::collections::BTreeMap;

use crate::error::CliError;

pub type Config = BTreeMap<String, String>;

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse(text: &str) -> Result<Config, CliError> {
    let mut out = Config::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = normalize(k);
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// Recovers the parameter echo from the `# key=value` header of an output.
pub fn from_header(text: &str) -> Config {
    text.lines()
        .map_while(|l| l.strip_prefix('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (normalize(k), v.trim().to_string()))
        .collect()
}

/// Reads parameters back from a JSON output document.
pub fn from_json(text: &str) -> Result<Config, CliError> {
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    let params = doc
        .get("params")
        .and_then(serde_json::Value::as_object)
        .ok_or_else(|| CliError::Usage("config: JSON document has no `params` object".into()))?;
    Ok(params.iter().filter_map(|(k, v)| v.as_str().map(|s| (normalize(k), s.to_string()))).collect())
}

/// Accepts a plain config file or a previous CSV/JSON output.
pub fn load(text: &str) -> Result<Config, CliError> {
    let head = text.trim_start();
    if head.starts_with('{') {
        from_json(text)
    } else if head.starts_with("# vpsub ") {
        Ok(from_header(text))
    } else {
        parse(text)
    }
}

pub fn render(cfg: &Config) -> String {
    cfg.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Pulls `--config <path>` out of `args` and splices the file's entries in
/// after the subcommand name.
pub fn expand_args(args: Vec<String>, subcommands: &[&str]) -> Result<Vec<String>, CliError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or_else(|| CliError::Usage("--config needs a path".into()))?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
    let cfg = load(&text)?;
    let at = rest
        .iter()
        .position(|a| subcommands.contains(&a.as_str()))
        .map(|i| i + 1)
        .ok_or_else(|| CliError::Usage("a subcommand is required".into()))?;
    let injected = cfg.into_iter().flat_map(|(k, v)| [format!("--{k}"), v]);
    rest.splice(at..at, injected);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_normalizes() {
        let c = parse("# comment\n v = 20\n\neta_d=0.5\n").unwrap();
        assert_eq!(c["v"], "20");
        assert_eq!(c["eta-d"], "0.5");
        assert!(parse("novalue\n").is_err());
        assert!(parse(" = 3\n").is_err());
    }

    #[test]
    fn header_round_trip() {
        let header = "# vpsub fig5\n# v=20\n# ks=1,2\nt,k1\n0.5,0.1\n";
        let c = from_header(header);
        assert_eq!(c.len(), 2);
        assert_eq!(parse(&render(&c)).unwrap(), c);
    }

    #[test]
    fn loads_previous_outputs() {
        let csv = "# vpsub fig5 0.1.0\n# v=20\n# cutoff-used: 9\nt,k1\n";
        assert_eq!(load(csv).unwrap().into_iter().collect::<Vec<_>>(), [("v".to_string(), "20".to_string())]);
        let json = r#"{"command": "beta", "params": {"rate": "0.1", "snr": "0.1626"}, "rows": []}"#;
        assert_eq!(load(json).unwrap()["snr"], "0.1626");
        assert!(load("{\"rows\": []}").is_err());
    }

    #[test]
    fn config_values_precede_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "v = 10\nk = 2\n").unwrap();
        let args: Vec<String> = ["vpsub", "--config", p.to_str().unwrap(), "keyrate", "--v", "20"].map(String::from).to_vec();
        let out = expand_args(args, &["keyrate"]).unwrap();
        assert_eq!(out, ["vpsub", "keyrate", "--k", "2", "--v", "10", "--v", "20"]);
    }
}
