use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command invocation, written last into its run directory.
pub struct RunManifest {
    command: &'static str,
    started: Instant,
    pub config: Value,
    pub seeds: Value,
    pub inputs: Value,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn start(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            config: Value::Null,
            seeds: json!({}),
            inputs: json!({}),
            outputs: Vec::new(),
        }
    }

    pub fn write(mut self, dir: &Path) -> CliResult<()> {
        self.outputs.sort();
        let doc = json!({
            "command": self.command,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "checkpoint_format": qretina::train::FORMAT_VERSION,
            "config": self.config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "duration_seconds": self.started.elapsed().as_secs_f64(),
        });
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}
