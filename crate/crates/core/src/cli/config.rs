//! Experiment config files: TOML with one `[suite]` table per experiment.
//!
//! Keys given in a suite's table override that suite's defaults; unknown keys are errors.
//!
//! ```toml
//! [consistency]
//! dims = [20, 40]
//! ranks = [1]
//! n_sim = 10
//! ```

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::experiment::{Settings, Suite};
use crate::error::{Error, Result};

fn merge<T: Serialize + DeserializeOwned>(defaults: &T, section: Option<&toml::Table>) -> Result<T> {
    let mut table = toml::Table::try_from(defaults).map_err(|e| Error::Parse(e.to_string()))?;
    if let Some(s) = section {
        for (k, v) in s {
            table.insert(k.clone(), v.clone());
        }
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Parse(e.message().to_string()))
}

/// Settings for `suite` from the config text (an empty text yields the defaults).
pub fn suite_settings(text: &str, suite: Suite) -> Result<Settings> {
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    let section = match doc.get(suite.name()) {
        None => None,
        Some(toml::Value::Table(t)) => Some(t),
        Some(_) => return Err(Error::Parse(format!("`{suite}` must be a table"))),
    };
    Ok(match Settings::defaults(suite) {
        Settings::CpGrid(s, d) => Settings::CpGrid(s, merge(&d, section)?),
        Settings::Block(d) => Settings::Block(merge(&d, section)?),
        Settings::Boolean(d) => Settings::Boolean(merge(&d, section)?),
    })
}
