use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use h2fmm::FORMAT_VERSION;
use serde::Serialize;

use crate::{CmdResult, GlobalOpts};

/// Metadata written next to every CSV output and embedded in JSON reports.
#[derive(Serialize)]
pub struct Meta<'a, C: Serialize> {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub format_version: u32,
    pub command: &'static str,
    pub global: &'a GlobalOpts,
    pub config: &'a C,
}

impl<'a, C: Serialize> Meta<'a, C> {
    pub fn new(command: &'static str, global: &'a GlobalOpts, config: &'a C) -> Self {
        Meta {
            tool: "h2fmm",
            tool_version: env!("CARGO_PKG_VERSION"),
            format_version: FORMAT_VERSION,
            command,
            global,
            config,
        }
    }
}

/// Buffered writer on `path`, or on standard output.
pub fn open(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// `<path>.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> CmdResult {
    let mut w = open(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Write the sidecar of a CSV file written to `path`; nothing for standard output.
pub fn write_sidecar<T: Serialize>(path: Option<&Path>, value: &T) -> CmdResult {
    match path {
        Some(p) => write_json(Some(&sidecar_path(p)), value),
        None => Ok(()),
    }
}
