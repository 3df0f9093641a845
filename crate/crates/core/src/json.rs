//! JSON output with a fixed float format and atomic file writes.
//!
//! Every `f64` is printed in scientific notation with 17 significant digits,
//! which round-trips exactly and makes reruns byte-identical.

use std::io::{self, Write};
use std::path::Path as FsPath;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::Result;

/// Formats a float with 17 significant digits, `null`-free callers only.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct Fixed<F> {
    inner: F,
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.inner.$name(w $(, $arg)*)
        })*
    };
}

impl<F: Formatter> Formatter for Fixed<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            w.write_all(fmt_f64(value).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

fn encode<T: Serialize + ?Sized, F: Formatter>(value: &T, inner: F) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed { inner });
    value
        .serialize(&mut ser)
        .map_err(|e| crate::Error::Parse(e.to_string()))?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Pretty-printed JSON with fixed float formatting.
pub fn to_string_pretty<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    encode(value, PrettyFormatter::new())
}

/// Single-line JSON with fixed float formatting.
pub fn to_string_compact<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    encode(value, serde_json::ser::CompactFormatter)
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: impl AsRef<FsPath>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => FsPath::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
