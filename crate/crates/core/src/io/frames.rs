//! Frame lines: `[timestamp,]v0,v1,...` with the readings in canonical
//! `ground * n + measure` order, optionally preceded by a
//! `# tomotact-frames protocol=<hex> v_cc=<V> electrodes=<n>` header.

use std::io::{BufRead, Write};

use super::fmt_g;
use crate::error::{Error, Result};
use crate::fingerprint;
use crate::protocol::PotentialFrame;

const HEADER_TAG: &str = "# tomotact-frames";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameHeader {
    pub protocol: u64,
    pub v_cc: f64,
    pub electrodes: usize,
}

impl FrameHeader {
    pub fn of(frame: &PotentialFrame) -> Self {
        Self { protocol: frame.fingerprint, v_cc: frame.v_cc, electrodes: frame.n_electrodes }
    }

    pub fn line(&self) -> String {
        format!(
            "{HEADER_TAG} protocol={} v_cc={} electrodes={}",
            fingerprint::format(self.protocol),
            fmt_g(self.v_cc),
            self.electrodes
        )
    }

    /// Parses a header comment; `None` for any other line.
    pub fn parse(line: &str) -> Option<Result<Self>> {
        let rest = line.trim().strip_prefix(HEADER_TAG)?;
        let bad = |reason: String| Error::Parse { location: "frame header".into(), reason };
        let (mut protocol, mut v_cc, mut electrodes) = (None, None, None);
        for field in rest.split_whitespace() {
            match field.split_once('=') {
                Some(("protocol", v)) => protocol = fingerprint::parse(v),
                Some(("v_cc", v)) => v_cc = v.parse::<f64>().ok(),
                Some(("electrodes", v)) => electrodes = v.parse::<usize>().ok(),
                _ => return Some(Err(bad(format!("unrecognized field '{field}'")))),
            }
        }
        Some(match (protocol, v_cc, electrodes) {
            (Some(protocol), Some(v_cc), Some(electrodes)) => Ok(Self { protocol, v_cc, electrodes }),
            _ => Err(bad("header needs protocol, v_cc and electrodes".into())),
        })
    }
}

/// Formats one frame line.
pub fn frame_line(values: &[f64], timestamp: Option<&str>) -> String {
    let mut s = String::with_capacity(values.len() * 12 + 16);
    if let Some(t) = timestamp {
        s.push_str(t);
        s.push(',');
    }
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&fmt_g(*v));
    }
    s
}

/// Parses a frame line of `len` readings, with or without a leading
/// timestamp field.
pub fn parse_frame_line(line: &str, len: usize) -> std::result::Result<(Option<String>, Vec<f64>), String> {
    let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
    let (timestamp, values) = if fields.len() == len + 1 {
        (Some(fields[0].to_string()), &fields[1..])
    } else if fields.len() == len {
        (None, &fields[..])
    } else {
        return Err(format!("expected {len} values (optionally after a timestamp), found {} fields", fields.len()));
    };
    let mut out = Vec::with_capacity(len);
    for (i, f) in values.iter().enumerate() {
        match f.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ => return Err(format!("value {} ('{f}') is not a finite number", i + 1)),
        }
    }
    Ok((timestamp, out))
}

pub fn write_frames<W: Write>(mut w: W, frames: &[PotentialFrame]) -> Result<()> {
    if let Some(first) = frames.first() {
        writeln!(w, "{}", FrameHeader::of(first).line())?;
    }
    for f in frames {
        writeln!(w, "{}", frame_line(&f.values, None))?;
    }
    Ok(())
}

/// Frames file contents: the header if present, and every frame with its
/// optional timestamp. Any malformed line is an error naming its line
/// number.
#[derive(Debug, Clone, Default)]
pub struct FrameFile {
    pub header: Option<FrameHeader>,
    pub frames: Vec<(Option<String>, Vec<f64>)>,
}

pub fn read_frames<R: BufRead>(r: R, len: usize, source: &str) -> Result<FrameFile> {
    let mut out = FrameFile::default();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if let Some(h) = FrameHeader::parse(&line) {
            out.header = Some(h?);
            continue;
        }
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let frame = parse_frame_line(&line, len)
            .map_err(|reason| Error::Parse { location: format!("{source}:{}", i + 1), reason })?;
        out.frames.push(frame);
    }
    Ok(out)
}
