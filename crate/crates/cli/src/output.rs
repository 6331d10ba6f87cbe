//! Output plumbing: JSON with 17 significant digits, a shared metadata
//! block, and all-or-nothing file commits.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use tempfile::NamedTempFile;

/// Pretty JSON formatter that prints every float with 17 significant digits,
/// enough to round-trip any `f64`.
struct Sig17<'a>(PrettyFormatter<'a>);

impl Formatter for Sig17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}

/// Provenance attached to every JSON artifact.
#[derive(Debug, Serialize)]
pub struct Metadata<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    /// `explicit` when passed on the command line, `generated` otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_source: Option<&'static str>,
    pub config: C,
    /// Only present with `--record-timing`, which gives up byte-identical reruns.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl<C: Serialize> Metadata<C> {
    pub fn new(command: &'static str, seed: Option<Seed>, config: C) -> Self {
        Self {
            tool: "hazshift",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: seed.map(|s| s.value),
            seed_source: seed.map(|s| if s.explicit { "explicit" } else { "generated" }),
            config,
            wall_time_s: None,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Document<'a, C: Serialize, R: Serialize> {
    pub metadata: &'a Metadata<C>,
    pub results: R,
}

#[derive(Debug, Clone, Copy)]
pub struct Seed {
    pub value: u64,
    pub explicit: bool,
}

impl Seed {
    pub fn resolve(flag: Option<u64>) -> Self {
        match flag {
            Some(value) => Self { value, explicit: true },
            None => {
                let nanos = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_nanos() as u64)
                    .unwrap_or_default();
                Self {
                    value: hazshift::rng::derive_seed(nanos, u64::from(std::process::id())),
                    explicit: false,
                }
            }
        }
    }
}

/// Files staged in temporaries next to their targets and renamed into
/// place together, so a failed command leaves nothing behind.
#[derive(Default)]
pub struct Outputs {
    staged: Vec<(PathBuf, NamedTempFile)>,
}

impl Outputs {
    pub fn stage(&mut self, path: impl Into<PathBuf>, bytes: &[u8]) -> Result<()> {
        let path = path.into();
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let mut tmp = NamedTempFile::new_in(&dir).with_context(|| format!("cannot write into {}", dir.display()))?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        self.staged.push((path, tmp));
        Ok(())
    }

    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.staged.len());
        for (path, tmp) in self.staged {
            tmp.persist(&path).with_context(|| format!("cannot create {}", path.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// `dir/stem{suffix}` for a sibling of `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Serializes CSV rows into memory.
pub fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        fill(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

/// Shortest round-trip text for a float; empty for `None`.
pub fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
