use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::record::{Domain, EcgRecord, LEAD_NAMES, NUM_LEADS};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"MECG1";

/// Serializes a record into the MECG1 layout.
pub fn encode_record(record: &EcgRecord) -> Result<Vec<u8>> {
    let id = record.record_id().as_bytes();
    let id_len = u16::try_from(id.len()).map_err(|_| Error::Argument("record id longer than 65535 bytes".into()))?;
    let (m, t) = record.leads().dim();
    let mut out = Vec::with_capacity(24 + id.len() + 4 * m * t);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&record.sample_rate_hz().to_le_bytes());
    out.extend_from_slice(&(m as u32).to_le_bytes());
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&id_len.to_le_bytes());
    out.extend_from_slice(id);
    out.push(record.domain().tag());
    let start = out.len();
    for v in record.leads().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Header(format!("file ends inside {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_record(buf: &[u8]) -> Result<EcgRecord> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(5, "magic")? != MAGIC {
        return Err(Error::Header("bad magic".into()));
    }
    let rate = c.u32("sample rate")?;
    let m = c.u32("lead count")? as usize;
    let t = c.u32("sample count")? as usize;
    let id_len = u16::from_le_bytes(c.take(2, "id length")?.try_into().unwrap()) as usize;
    let id = std::str::from_utf8(c.take(id_len, "record id")?)
        .map_err(|_| Error::Header("record id is not UTF-8".into()))?
        .to_owned();
    let tag = c.take(1, "domain tag")?[0];
    let domain = Domain::from_tag(tag).ok_or_else(|| Error::Header(format!("unknown domain tag {tag}")))?;
    if m != NUM_LEADS {
        return Err(Error::LeadCount(m));
    }
    if rate == 0 || t == 0 {
        return Err(Error::Header("sample rate and sample count must be positive".into()));
    }
    let payload_len = 4 * m * t;
    let rest = &buf[c.pos..];
    if rest.len() < payload_len + 4 {
        return Err(Error::Truncated { expected: payload_len + 4, found: rest.len() });
    }
    if rest.len() > payload_len + 4 {
        return Err(Error::Header(format!("{} trailing bytes", rest.len() - payload_len - 4)));
    }
    let payload = &rest[..payload_len];
    let stored = u32::from_le_bytes(rest[payload_len..].try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let samples: Vec<f32> = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    let leads = Array2::from_shape_vec((m, t), samples).map_err(|e| Error::Shape(e.to_string()))?;
    EcgRecord::new(leads, rate, id, domain)
}

pub fn write_record(record: &EcgRecord, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_record(record)?)?;
    Ok(())
}

pub fn read_record(path: impl AsRef<Path>) -> Result<EcgRecord> {
    decode_record(&fs::read(path)?)
}

/// CSV with a header row of lead names and one row per time step. Values
/// use the shortest representation that parses back to the same `f32`.
pub fn write_csv(record: &EcgRecord, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(LEAD_NAMES)?;
    let leads = record.leads();
    for t in 0..record.num_samples() {
        w.write_record(leads.column(t).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// CSV carries no metadata, so rate, id and domain are supplied here.
pub fn read_csv(path: impl AsRef<Path>, sample_rate_hz: u32, record_id: &str, domain: Domain) -> Result<EcgRecord> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() != NUM_LEADS {
        return Err(Error::LeadCount(header.len()));
    }
    if header.iter().zip(LEAD_NAMES).any(|(h, l)| h != l) {
        return Err(Error::Header(format!("lead names {:?} not in standard order", header)));
    }
    let mut flat = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != NUM_LEADS {
            return Err(Error::Shape(format!("row {rows} has {} fields", rec.len())));
        }
        for f in rec.iter() {
            flat.push(f.trim().parse::<f32>().map_err(|e| Error::Data(format!("row {rows}: {e}")))?);
        }
        rows += 1;
    }
    let leads = Array2::from_shape_vec((rows, NUM_LEADS), flat)
        .map_err(|e| Error::Shape(e.to_string()))?
        .reversed_axes()
        .as_standard_layout()
        .into_owned();
    EcgRecord::new(leads, sample_rate_hz, record_id, domain)
}

struct WfdbSignal {
    file: String,
    gain: f64,
    baseline: f64,
    name: String,
}

fn parse_signal_line(line: &str) -> Result<WfdbSignal> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() < 9 {
        return Err(Error::Header(format!("signal line needs 9 fields: {line}")));
    }
    if f[1] != "16" {
        return Err(Error::Header(format!("only format 16 is supported, found {}", f[1])));
    }
    // gain field: "200", "200/mV" or "200(0)/mV"
    let g = f[2].split('/').next().unwrap_or("");
    let (gain_s, base_s) = match g.find('(') {
        Some(i) => (&g[..i], Some(g[i + 1..].trim_end_matches(')'))),
        None => (g, None),
    };
    let bad = |what: &str| Error::Header(format!("bad {what} in: {line}"));
    let mut gain: f64 = gain_s.parse().map_err(|_| bad("gain"))?;
    if gain == 0.0 {
        gain = 200.0;
    }
    let adc_zero: f64 = f[4].parse().map_err(|_| bad("adc zero"))?;
    let baseline = match base_s {
        Some(b) => b.parse().map_err(|_| bad("baseline"))?,
        None => adc_zero,
    };
    Ok(WfdbSignal { file: f[0].to_owned(), gain, baseline, name: f[8..].join(" ") })
}

/// Reads the matrix-and-rate subset of a WFDB record: a `.hea` header and a
/// single format-16 `.dat` file, reordered into the standard 12 leads.
pub fn read_wfdb(header_path: impl AsRef<Path>) -> Result<EcgRecord> {
    let header_path = header_path.as_ref();
    let text = fs::read_to_string(header_path)?;
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let first = lines.next().ok_or_else(|| Error::Header("empty header".into()))?;
    let f: Vec<&str> = first.split_whitespace().collect();
    if f.len() < 4 {
        return Err(Error::Header(format!("record line needs name, signals, rate, samples: {first}")));
    }
    let name = f[0].split('/').next().unwrap_or(f[0]).to_owned();
    let nsig: usize = f[1].parse().map_err(|_| Error::Header("bad signal count".into()))?;
    let rate: f64 = f[2].split('/').next().unwrap().parse().map_err(|_| Error::Header("bad rate".into()))?;
    let nsamp: usize = f[3].parse().map_err(|_| Error::Header("bad sample count".into()))?;
    if rate <= 0.0 || rate.fract() != 0.0 {
        return Err(Error::Header(format!("sample rate {rate} is not a positive integer")));
    }
    let signals: Vec<WfdbSignal> = lines.take(nsig).map(parse_signal_line).collect::<Result<_>>()?;
    if signals.len() != nsig {
        return Err(Error::Header(format!("expected {nsig} signal lines, found {}", signals.len())));
    }
    if signals.iter().any(|s| s.file != signals[0].file) {
        return Err(Error::Header("signals spread over several files".into()));
    }
    let mut order = [usize::MAX; NUM_LEADS];
    for (i, s) in signals.iter().enumerate() {
        if let Some(j) = LEAD_NAMES.iter().position(|l| l.eq_ignore_ascii_case(&s.name)) {
            order[j] = i;
        }
    }
    let found = order.iter().filter(|&&i| i != usize::MAX).count();
    if found != NUM_LEADS {
        return Err(Error::LeadCount(found));
    }
    let dat = header_path.with_file_name(&signals[0].file);
    let bytes = fs::read(dat)?;
    let expected = 2 * nsig * nsamp;
    if bytes.len() < expected {
        return Err(Error::Truncated { expected, found: bytes.len() });
    }
    let mut leads = Array2::<f32>::zeros((NUM_LEADS, nsamp));
    for t in 0..nsamp {
        for (j, &i) in order.iter().enumerate() {
            let k = 2 * (t * nsig + i);
            let d = i16::from_le_bytes([bytes[k], bytes[k + 1]]) as f64;
            leads[[j, t]] = ((d - signals[i].baseline) / signals[i].gain) as f32;
        }
    }
    EcgRecord::new(leads, rate as u32, name, Domain::External)
}
