//! Wall-clock seconds with the `SOURCE_DATE_EPOCH` override, so that runs
//! under the same environment produce byte-identical timestamped outputs.

use std::time::{SystemTime, UNIX_EPOCH};

use crate::{CliError, Result};

/// Seconds since the Unix epoch, taken from `SOURCE_DATE_EPOCH` when set.
pub fn timestamp() -> Result<u64> {
    match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("SOURCE_DATE_EPOCH is not an integer: {v:?}"))),
        Err(_) => Ok(SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)),
    }
}
