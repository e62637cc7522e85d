//! Persistence: JSON documents whose floating-point payload survives a
//! round trip bit-for-bit.
//!
//! Finite values are printed with 17 significant digits (`{:.16e}`), the
//! shortest count guaranteed to reproduce every IEEE 754 double exactly;
//! non-finite diagnostics (an undefined R-hat, for instance) map to JSON
//! `null` and come back as NaN.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::robust::{ComparisonRow, RobustBounds};
use crate::summary::PosteriorSummary;

/// Version stamp embedded in every document this module writes.
pub const FORMAT_VERSION: u32 = 1;

/// (De)serializes an `f64` where NaN (and infinities) appear as JSON `null`.
pub mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            ser.serialize_f64(*x)
        } else {
            ser.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(de)?.unwrap_or(f64::NAN))
    }
}

/// Pretty-printing JSON formatter that writes every finite `f64` with 17
/// significant digits so deserialization reproduces the exact bits.
struct SigFigFormatter {
    inner: PrettyFormatter<'static>,
}

impl SigFigFormatter {
    fn new() -> Self {
        Self {
            inner: PrettyFormatter::new(),
        }
    }
}

impl Formatter for SigFigFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn end_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_key(writer)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Serializes any value to pretty JSON with exact-round-trip floats and a
/// trailing newline.
pub fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = Serializer::with_formatter(&mut out, SigFigFormatter::new());
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Io(format!("serializing to JSON: {e}")))?;
    out.push(b'\n');
    String::from_utf8(out).map_err(|e| Error::Io(format!("serialized JSON was not UTF-8: {e}")))
}

/// The complete output of one robustness analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsDoc {
    pub format_version: u32,
    /// Study labels in data order (the order `delta` indices refer to).
    pub study_names: Vec<String>,
    /// Bound rows, one per requested quantity.
    pub bounds: RobustBounds,
    /// Summary of the bias-unadjusted model (every `q_i = 1`), when run.
    pub unadjusted: Option<PosteriorSummary>,
    /// Comparison of the unadjusted conclusions against the bounds.
    pub comparison: Option<Vec<ComparisonRow>>,
}

/// Everything needed to reproduce a run: tool identity plus the fully
/// resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestDoc {
    pub format_version: u32,
    pub tool: ToolInfo,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ManifestDoc {
    pub fn for_config(config: RunConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            tool: ToolInfo {
                name: "robustmeta".to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
            config,
        }
    }
}

fn write_doc<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = to_pretty_json(value)?;
    fs::write(path, json).map_err(|e| Error::Io(format!("writing {}: {e}", path.display())))
}

fn read_doc<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Io(format!("parsing {}: {e}", path.display())))
}

/// Writes `results.json` into `dir`.
pub fn write_results(dir: &Path, doc: &ResultsDoc) -> Result<()> {
    write_doc(&dir.join("results.json"), doc)
}

/// Reads a `results.json` produced by [`write_results`].
pub fn load_results(path: &Path) -> Result<ResultsDoc> {
    let doc: ResultsDoc = read_doc(path)?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::Io(format!(
            "{}: format version {} is not supported (expected {})",
            path.display(),
            doc.format_version,
            FORMAT_VERSION
        )));
    }
    Ok(doc)
}

/// Writes `manifest.json` into `dir`.
pub fn write_manifest(dir: &Path, doc: &ManifestDoc) -> Result<()> {
    write_doc(&dir.join("manifest.json"), doc)
}

/// Reads a `manifest.json` produced by [`write_manifest`].
pub fn load_manifest(path: &Path) -> Result<ManifestDoc> {
    let doc: ManifestDoc = read_doc(path)?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::Io(format!(
            "{}: format version {} is not supported (expected {})",
            path.display(),
            doc.format_version,
            FORMAT_VERSION
        )));
    }
    Ok(doc)
}
