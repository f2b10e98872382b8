//! Event file formats.
//!
//! Binary: magic `EVT1`, little-endian `u32` width, `u32` height, `u64`
//! count, then `count` 20-byte records `(f64 t, u16 x, u16 y, i8 p, 7 pad)`.
//! CSV: header `t,x,y,p`, then one event per line. The sensor size travels
//! in a leading comment line `# width,height`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Event, EventStream};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EVT1";
const RECORD_BYTES: usize = 20;

pub fn write_events_binary(path: &Path, stream: &EventStream) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(20);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&(stream.width() as u32).to_le_bytes());
    header.extend_from_slice(&(stream.height() as u32).to_le_bytes());
    header.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    w.write_all(&header).map_err(|e| Error::io(path, e))?;
    let mut rec = [0u8; RECORD_BYTES];
    for e in stream.events() {
        rec[0..8].copy_from_slice(&e.t.to_le_bytes());
        rec[8..10].copy_from_slice(&e.x.to_le_bytes());
        rec[10..12].copy_from_slice(&e.y.to_le_bytes());
        rec[12] = e.p as u8;
        w.write_all(&rec).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_events_binary(path: &Path) -> Result<EventStream> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; 20];
    r.read_exact(&mut header)
        .map_err(|_| Error::format(path, "truncated event header"))?;
    if &header[0..4] != MAGIC {
        return Err(Error::format(path, "missing EVT1 magic"));
    }
    let width = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(header[12..20].try_into().unwrap());
    let mut body = Vec::new();
    r.read_to_end(&mut body).map_err(|e| Error::io(path, e))?;
    let expected = count
        .checked_mul(RECORD_BYTES as u64)
        .ok_or_else(|| Error::format(path, "event count overflows"))?;
    if body.len() as u64 != expected {
        return Err(Error::format(
            path,
            format!("header declares {count} events but body holds {} bytes", body.len()),
        ));
    }
    let events = body
        .chunks_exact(RECORD_BYTES)
        .map(|rec| Event {
            t: f64::from_le_bytes(rec[0..8].try_into().unwrap()),
            x: u16::from_le_bytes(rec[8..10].try_into().unwrap()),
            y: u16::from_le_bytes(rec[10..12].try_into().unwrap()),
            p: rec[12] as i8,
        })
        .collect();
    EventStream::new(width, height, events).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_events_csv(path: &Path, stream: &EventStream) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "# {},{}", stream.width(), stream.height()).map_err(io)?;
    writeln!(w, "t,x,y,p").map_err(io)?;
    for e in stream.events() {
        // `{:?}` prints the shortest representation that parses back exactly
        writeln!(w, "{:?},{},{},{}", e.t, e.x, e.y, e.p).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_events_csv(path: &Path) -> Result<EventStream> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut width = None;
    let mut height = None;
    let mut events = Vec::new();
    let mut seen_header = false;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(dims) = line.strip_prefix('#') {
            let parts: Vec<&str> = dims.trim().split(',').collect();
            if let [w, h] = parts[..] {
                width = w.trim().parse::<usize>().ok();
                height = h.trim().parse::<usize>().ok();
            }
            continue;
        }
        if !seen_header {
            if line != "t,x,y,p" {
                return Err(Error::format(path, format!("line {}: expected header t,x,y,p", lineno + 1)));
            }
            seen_header = true;
            continue;
        }
        let bad = |what: &str| Error::format(path, format!("line {}: bad {what}", lineno + 1));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad("field count"));
        }
        events.push(Event {
            t: fields[0].trim().parse().map_err(|_| bad("t"))?,
            x: fields[1].trim().parse().map_err(|_| bad("x"))?,
            y: fields[2].trim().parse().map_err(|_| bad("y"))?,
            p: fields[3].trim().parse().map_err(|_| bad("p"))?,
        });
    }
    if !seen_header {
        return Err(Error::format(path, "missing header t,x,y,p"));
    }
    let width = width.unwrap_or_else(|| events.iter().map(|e| e.x as usize + 1).max().unwrap_or(0));
    let height = height.unwrap_or_else(|| events.iter().map(|e| e.y as usize + 1).max().unwrap_or(0));
    EventStream::from_unsorted(width, height, events).map_err(|e| Error::format(path, e.to_string()))
}

fn is_csv(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Dispatches on extension: `.csv` is text, anything else binary.
pub fn read_events(path: &Path) -> Result<EventStream> {
    if is_csv(path) {
        read_events_csv(path)
    } else {
        read_events_binary(path)
    }
}

pub fn write_events(path: &Path, stream: &EventStream) -> Result<()> {
    if is_csv(path) {
        write_events_csv(path, stream)
    } else {
        write_events_binary(path, stream)
    }
}
