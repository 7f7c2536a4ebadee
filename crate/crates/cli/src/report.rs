//! Line-oriented `key=value` reports.
//!
//! Reports go to stdout so acceptance scripts can diff them. Keys carrying
//! wall-clock measurements are prefixed `timing_`; a determinism diff drops
//! those lines and compares the rest byte for byte.

use crate::config::ToolConfig;

pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    /// Starts a report for one subcommand; the effective global config is
    /// echoed first so every report is self-describing.
    pub fn new(command: &str, config: &ToolConfig) -> Self {
        let mut lines = vec![("command".to_string(), command.to_string())];
        lines.extend(config.report_lines());
        Self { lines }
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        debug_assert!(!key.starts_with("timing_"), "use push_timing for timing keys");
        self.lines.push((key.to_string(), value.to_string()));
    }

    /// Timing keys are prefixed so determinism diffs can exclude them.
    pub fn push_timing(&mut self, key: &str, seconds: f64) {
        self.lines.push((format!("timing_{key}"), format!("{seconds:.6}")));
    }

    pub fn print(&self) {
        for (k, v) in &self.lines {
            println!("{k}={v}");
        }
    }
}
