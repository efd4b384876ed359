//! JSONL record writer.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Map, Value};

/// Bumped whenever a record layout changes.
pub const FORMAT_VERSION: u32 = 1;

pub struct Timer(Instant);

impl Timer {
    pub fn start() -> Self {
        Timer(Instant::now())
    }
}

pub struct Output {
    sink: BufWriter<Box<dyn Write>>,
    notes: Map<String, Value>,
}

impl Output {
    pub fn open(path: Option<&Path>) -> io::Result<Self> {
        let sink: Box<dyn Write> = match path {
            Some(p) => Box::new(File::create(p)?),
            None => Box::new(io::stdout()),
        };
        Ok(Output {
            sink: BufWriter::new(sink),
            notes: Map::new(),
        })
    }

    fn line(&mut self, v: &Value) -> io::Result<()> {
        serde_json::to_writer(&mut self.sink, v)?;
        self.sink.write_all(b"\n")
    }

    /// Versioned header followed by the one line that varies between runs.
    pub fn header(&mut self, command: &str, config: Value) -> io::Result<()> {
        self.line(&json!({
            "format": "adder-spir-records",
            "version": FORMAT_VERSION,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": config,
        }))?;
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis());
        self.line(&json!({ "nondeterministic": true, "created_unix_ms": created }))
    }

    /// Writes `value` with a `record` field naming its kind.
    pub fn record<T: Serialize>(&mut self, kind: &str, value: &T) -> Result<(), serde_json::Error> {
        let mut v = serde_json::to_value(value)?;
        let v = match v.as_object_mut() {
            Some(map) => {
                map.insert("record".into(), Value::from(kind));
                v
            }
            None => json!({ "record": kind, "value": v }),
        };
        self.line(&v).map_err(serde_json::Error::io)
    }

    /// Run-dependent value reported in the trailer.
    pub fn note(&mut self, key: &str, value: Value) {
        self.notes.insert(key.into(), value);
    }

    /// Trailer with timings, also marked nondeterministic.
    pub fn finish(mut self, timer: &Timer) -> io::Result<()> {
        let mut trailer = std::mem::take(&mut self.notes);
        trailer.insert("nondeterministic".into(), Value::Bool(true));
        trailer.insert("elapsed_ms".into(), json!(timer.0.elapsed().as_secs_f64() * 1e3));
        self.line(&Value::Object(trailer))?;
        self.sink.flush()
    }
}
