//! Event, frame and tensor file formats.
//!
//! Binary event files (`.evt`) are little-endian:
//!
//! ```text
//! header (18 bytes): magic "EVT0" | version u16 | width u16 | height u16 | count u64
//! record (14 bytes): t u64 | x u16 | y u16 | p i8 | pad u8
//! ```
//!
//! Text event files hold one `t x y p` line per event; `#` starts a comment
//! line. Polarity may be written as `0`/`1` or `-1`/`1`.
//!
//! A frame directory holds `frame_%06d.png` images plus `timestamps.txt` with
//! one microsecond timestamp per line.
//!
//! Tensors use a flat container: magic "TNS0" | ndim u32 | dims u64 x ndim |
//! row-major f64 values, all little-endian.
//!
//! Every writer goes through a temporary file in the destination directory
//! and renames it into place, so readers never see a partial file.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::ImageEncoder;

use crate::error::{Error, Result};
use crate::types::{Event, EventStream, Frame, FrameSequence, Timestamp};

pub const EVT_MAGIC: [u8; 4] = *b"EVT0";
pub const EVT_VERSION: u16 = 1;
pub const EVT_HEADER_LEN: usize = 18;
pub const EVT_RECORD_LEN: usize = 14;

pub const TENSOR_MAGIC: [u8; 4] = *b"TNS0";

pub const TIMESTAMPS_FILE: &str = "timestamps.txt";

/// Decoded `.evt` header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventFileHeader {
    pub version: u16,
    pub width: u16,
    pub height: u16,
    pub count: u64,
}

impl EventFileHeader {
    pub fn to_bytes(&self) -> [u8; EVT_HEADER_LEN] {
        let mut b = [0u8; EVT_HEADER_LEN];
        b[0..4].copy_from_slice(&EVT_MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..8].copy_from_slice(&self.width.to_le_bytes());
        b[8..10].copy_from_slice(&self.height.to_le_bytes());
        b[10..18].copy_from_slice(&self.count.to_le_bytes());
        b
    }

    pub fn parse(bytes: &[u8; EVT_HEADER_LEN], path: &Path) -> Result<Self> {
        if bytes[0..4] != EVT_MAGIC {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!("bad magic {:?}, expected \"EVT0\"", &bytes[0..4]),
            });
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != EVT_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!("unsupported version {version}"),
            });
        }
        Ok(Self {
            version,
            width: u16::from_le_bytes([bytes[6], bytes[7]]),
            height: u16::from_le_bytes([bytes[8], bytes[9]]),
            count: u64::from_le_bytes(bytes[10..18].try_into().unwrap()),
        })
    }
}

/// Writes `path` atomically: the closure fills a temp file next to `path`,
/// which is then renamed over it.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> std::io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn parse_field<T: std::str::FromStr>(tok: &str, name: &str, path: &Path, line: usize) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("invalid {name} {tok:?}"),
    })
}

/// Reads a text event file for a `width x height` sensor.
///
/// Events are stable-sorted by time; out-of-bounds coordinates are a
/// validation error.
pub fn read_events_text(path: impl AsRef<Path>, width: u16, height: u16) -> Result<EventStream> {
    let path = path.as_ref();
    let reader = BufReader::new(open(path)?);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg: format!("expected 4 fields `t x y p`, found {}", toks.len()),
            });
        }
        let t: u64 = parse_field(toks[0], "timestamp", path, lineno)?;
        let x: u16 = parse_field(toks[1], "x", path, lineno)?;
        let y: u16 = parse_field(toks[2], "y", path, lineno)?;
        let p = match toks[3] {
            "1" | "+1" => 1,
            "0" | "-1" => -1,
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno,
                    msg: format!("invalid polarity {other:?}"),
                })
            }
        };
        events.push(Event::new(t, x, y, p));
    }
    EventStream::from_unsorted(width, height, events)
}

pub fn write_events_text(stream: &EventStream, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_atomic(path, |w| {
        writeln!(w, "# t x y p (width={} height={})", stream.width(), stream.height())?;
        for e in stream.events() {
            writeln!(w, "{} {} {} {}", e.t, e.x, e.y, e.p)?;
        }
        Ok(())
    })
}

pub fn read_events_binary(path: impl AsRef<Path>) -> Result<EventStream> {
    let path = path.as_ref();
    let mut reader = BufReader::new(open(path)?);
    let mut hbuf = [0u8; EVT_HEADER_LEN];
    let got = read_up_to(&mut reader, &mut hbuf).map_err(|e| Error::io(path, e))?;
    if got < EVT_HEADER_LEN {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("header needs {EVT_HEADER_LEN} bytes, file has {got}"),
        });
    }
    let header = EventFileHeader::parse(&hbuf, path)?;

    let expected = header.count.checked_mul(EVT_RECORD_LEN as u64).ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        msg: format!("record count {} overflows", header.count),
    })?;
    // Only the declared record region is read; trailing bytes are ignored.
    let mut body = Vec::new();
    reader
        .by_ref()
        .take(expected)
        .read_to_end(&mut body)
        .map_err(|e| Error::io(path, e))?;
    if (body.len() as u64) < expected {
        return Err(Error::Corruption {
            path: path.to_path_buf(),
            expected,
            actual: body.len() as u64,
        });
    }

    let events = body
        .chunks_exact(EVT_RECORD_LEN)
        .map(|r| Event {
            t: u64::from_le_bytes(r[0..8].try_into().unwrap()),
            x: u16::from_le_bytes([r[8], r[9]]),
            y: u16::from_le_bytes([r[10], r[11]]),
            p: r[12] as i8,
        })
        .collect();
    EventStream::new(header.width, header.height, events)
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..])? {
            0 => break,
            k => n += k,
        }
    }
    Ok(n)
}

/// Encodes a stream into the `.evt` byte layout.
pub fn encode_events_binary(stream: &EventStream) -> Vec<u8> {
    let header = EventFileHeader {
        version: EVT_VERSION,
        width: stream.width(),
        height: stream.height(),
        count: stream.len() as u64,
    };
    let mut out = Vec::with_capacity(EVT_HEADER_LEN + stream.len() * EVT_RECORD_LEN);
    out.extend_from_slice(&header.to_bytes());
    for e in stream.events() {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.p as u8);
        out.push(0);
    }
    out
}

pub fn write_events_binary(stream: &EventStream, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_events_binary(stream);
    write_atomic(path.as_ref(), |w| w.write_all(&bytes))
}

/// Reads events by extension: `.txt` needs the sensor size, anything else is
/// treated as `.evt`.
pub fn read_events(path: impl AsRef<Path>, dims: Option<(u16, u16)>) -> Result<EventStream> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "txt") {
        let (w, h) = dims.ok_or_else(|| {
            Error::Config(format!("{}: text event files need an explicit sensor size", path.display()))
        })?;
        read_events_text(path, w, h)
    } else {
        read_events_binary(path)
    }
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

fn frame_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".png")?;
    if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn manifest(dir: &Path, msg: impl Into<String>) -> Error {
    Error::Manifest { path: dir.to_path_buf(), msg: msg.into() }
}

/// Loads a frame directory. Grayscale PNGs become 1-channel frames, anything
/// else is converted to RGB.
pub fn read_frames(dir: impl AsRef<Path>) -> Result<FrameSequence> {
    let dir = dir.as_ref();
    let mut indexed = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        if let Some(i) = name.to_str().and_then(frame_index) {
            indexed.push((i, entry.path()));
        }
    }
    indexed.sort();
    if let Some(pos) = indexed.iter().enumerate().position(|(k, (i, _))| *i != k) {
        return Err(manifest(dir, format!("missing {}", frame_file_name(pos))));
    }

    let ts_path = dir.join(TIMESTAMPS_FILE);
    let ts_text = fs::read_to_string(&ts_path).map_err(|e| Error::io(&ts_path, e))?;
    let mut timestamps: Vec<Timestamp> = Vec::new();
    for (i, line) in ts_text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let t = line
            .parse()
            .map_err(|_| manifest(&ts_path, format!("line {}: invalid timestamp {line:?}", i + 1)))?;
        timestamps.push(t);
    }
    if timestamps.len() < indexed.len() {
        return Err(manifest(
            &ts_path,
            format!("no timestamp for {} ({} frames, {} timestamps)", frame_file_name(timestamps.len()), indexed.len(), timestamps.len()),
        ));
    }
    if timestamps.len() > indexed.len() {
        return Err(manifest(
            &ts_path,
            format!("{} timestamps for {} frames", timestamps.len(), indexed.len()),
        ));
    }
    if let Some(i) = (1..timestamps.len()).find(|&i| timestamps[i] <= timestamps[i - 1]) {
        return Err(manifest(&ts_path, format!("timestamps not strictly increasing at line {}", i + 1)));
    }

    let frames = indexed
        .iter()
        .map(|(_, p)| read_frame_png(p))
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, timestamps)
}

pub fn read_frame_png(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(img.color(), image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16);
    if gray {
        let px = img.into_luma8().into_raw();
        Frame::gray(w, h, px.into_iter().map(|v| v as f64 / 255.0).collect())
    } else {
        let px = img.into_rgb8().into_raw();
        Frame::new(w, h, 3, px.into_iter().map(|v| v as f64 / 255.0).collect())
    }
}

/// 8-bit quantisation used by the frame writer.
pub fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_frame_png(frame: &Frame, path: &Path) -> Result<()> {
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let raw: Vec<u8> = frame.pixels().iter().map(|&v| quantize_u8(v)).collect();
    let color = if frame.channels() == 1 { image::ExtendedColorType::L8 } else { image::ExtendedColorType::Rgb8 };
    let mut encoded = Vec::new();
    image::codecs::png::PngEncoder::new(&mut encoded)
        .write_image(&raw, w, h, color)
        .map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    write_atomic(path, |out| out.write_all(&encoded))
}

/// Writes `frame_%06d.png` files and `timestamps.txt`, creating `dir` if
/// needed. Intensities are quantised to 8 bits.
pub fn write_frames(seq: &FrameSequence, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in seq.frames().iter().enumerate() {
        write_frame_png(frame, &dir.join(frame_file_name(i)))?;
    }
    write_atomic(&dir.join(TIMESTAMPS_FILE), |w| {
        for t in seq.timestamps() {
            writeln!(w, "{t}")?;
        }
        Ok(())
    })
}

/// Dense row-major tensor as stored in the flat container.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != values.len() {
            return Err(Error::Shape(format!("dims {dims:?} need {n} values, got {}", values.len())));
        }
        Ok(Self { dims, values })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.dims.len() + 8 * self.values.len());
        out.extend_from_slice(&TENSOR_MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let fmt = |msg: String| Error::Format { path: path.to_path_buf(), msg };
        if bytes.len() < 8 || bytes[0..4] != TENSOR_MAGIC {
            return Err(fmt("bad magic, expected \"TNS0\"".into()));
        }
        let ndim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let header_len = 8 + 8 * ndim;
        if bytes.len() < header_len {
            return Err(fmt(format!("header declares {ndim} dims but file is {} bytes", bytes.len())));
        }
        let dims: Vec<usize> = bytes[8..header_len]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| fmt(format!("dims {dims:?} overflow")))?;
        let expected = n as u64 * 8;
        let actual = (bytes.len() - header_len) as u64;
        if actual < expected {
            return Err(Error::Corruption { path: path.to_path_buf(), expected, actual });
        }
        let values = bytes[header_len..header_len + n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dims, values })
    }
}

pub fn write_tensor(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let bytes = tensor.encode();
    write_atomic(path.as_ref(), |w| w.write_all(&bytes))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::decode(&bytes, path)
}
