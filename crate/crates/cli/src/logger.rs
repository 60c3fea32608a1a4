//! One JSON object per log record on standard error.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use log::{LevelFilter, Log, Metadata, Record};
use serde::Serialize;

struct JsonLogger {
    level: LevelFilter,
}

#[derive(Serialize)]
struct Line<'a> {
    ts_ms: u128,
    level: &'a str,
    target: &'a str,
    message: String,
}

impl Log for JsonLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= self.level
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let line = Line {
            ts_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            level: record.level().as_str(),
            target: record.target(),
            message: record.args().to_string(),
        };
        if let Ok(s) = serde_json::to_string(&line) {
            let _ = writeln!(std::io::stderr().lock(), "{s}");
        }
    }

    fn flush(&self) {
        let _ = std::io::stderr().flush();
    }
}

/// Installs the logger; a second call is a no-op.
pub fn init(level: LevelFilter) {
    if log::set_boxed_logger(Box::new(JsonLogger { level })).is_ok() {
        log::set_max_level(level);
    }
}
