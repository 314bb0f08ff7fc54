//! JSON Lines dataset files.
//!
//! Line 1 is the header `{"k":K,"d":d,"c":C,"target":"class"|"expert","prob_outputs":bool}`;
//! every further line is `{"id":..,"domain":..,"label":..,"outputs":[[..]..]}`.
//! Floats are written with 9 significant digits in scientific notation, so a
//! dataset whose values are already 9-digit decimals survives save/load bit-exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde_json::{Map, Value};

use super::{Dataset, DatasetSchema, ExpertOutputRecord, TargetKind};
use crate::error::{Error, Result};

/// 9 significant digits, scientific notation, ties to even.
pub fn format_float(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(dataset, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_dataset<W: Write>(dataset: &Dataset, w: &mut W) -> std::io::Result<()> {
    let s = dataset.schema();
    writeln!(
        w,
        "{{\"k\":{},\"d\":{},\"c\":{},\"target\":\"{}\",\"prob_outputs\":{}}}",
        s.num_experts,
        s.output_dim,
        s.num_classes,
        s.target_kind.as_str(),
        s.prob_outputs
    )?;
    let mut line = String::new();
    for r in dataset.records() {
        line.clear();
        line.push_str(&format!(
            "{{\"id\":{},\"domain\":{},\"label\":{},\"outputs\":[",
            r.id, r.domain, r.label
        ));
        for (k, v) in r.experts().enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push('[');
            for (j, x) in v.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format_float(*x));
            }
            line.push(']');
        }
        line.push_str("]}");
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_dataset<R: Read>(reader: BufReader<R>) -> Result<Dataset> {
    let mut lines = reader.lines().enumerate();
    let schema = match lines.next() {
        Some((_, line)) => parse_header(&line.map_err(|e| Error::io("<input>", e))?)?,
        None => return Err(Error::malformed(1, "header", "missing header line")),
    };
    schema
        .validate()
        .map_err(|e| Error::malformed(1, "header", e.to_string()))?;

    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record(&line, line_no, &schema)?;
        record.validate(&schema, line_no)?;
        records.push(record);
    }
    Dataset::new(schema, records)
}

fn parse_object(line: &str, line_no: usize, what: &str) -> Result<Map<String, Value>> {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(Error::malformed(line_no, what, "not a JSON object")),
        Err(e) => Err(Error::malformed(line_no, what, e.to_string())),
    }
}

fn field<'a>(map: &'a Map<String, Value>, name: &str, line: usize) -> Result<&'a Value> {
    map.get(name)
        .ok_or_else(|| Error::malformed(line, name, "missing"))
}

fn uint_field(map: &Map<String, Value>, name: &str, line: usize) -> Result<u64> {
    field(map, name, line)?
        .as_u64()
        .ok_or_else(|| Error::malformed(line, name, "expected a non-negative integer"))
}

fn parse_header(line: &str) -> Result<DatasetSchema> {
    let map = parse_object(line, 1, "header")?;
    let target = field(&map, "target", 1)?;
    let target_kind = target
        .as_str()
        .and_then(TargetKind::parse)
        .ok_or_else(|| Error::malformed(1, "target", "expected \"class\" or \"expert\""))?;
    let prob_outputs = field(&map, "prob_outputs", 1)?
        .as_bool()
        .ok_or_else(|| Error::malformed(1, "prob_outputs", "expected a boolean"))?;
    Ok(DatasetSchema {
        num_experts: uint_field(&map, "k", 1)? as usize,
        output_dim: uint_field(&map, "d", 1)? as usize,
        num_classes: uint_field(&map, "c", 1)? as usize,
        target_kind,
        prob_outputs,
    })
}

fn parse_record(line: &str, line_no: usize, schema: &DatasetSchema) -> Result<ExpertOutputRecord> {
    let map = parse_object(line, line_no, "record")?;
    let id = uint_field(&map, "id", line_no)?;
    let domain = uint_field(&map, "domain", line_no)? as usize;
    let label = uint_field(&map, "label", line_no)? as usize;
    let outputs = field(&map, "outputs", line_no)?
        .as_array()
        .ok_or_else(|| Error::malformed(line_no, "outputs", "expected an array of vectors"))?;
    if outputs.len() != schema.num_experts {
        return Err(Error::SchemaMismatch {
            line: Some(line_no),
            expected: format!("K={} output vectors", schema.num_experts),
            found: format!("{} output vectors", outputs.len()),
        });
    }
    let mut flat = Vec::with_capacity(schema.num_experts * schema.output_dim);
    for (k, v) in outputs.iter().enumerate() {
        let v = v
            .as_array()
            .ok_or_else(|| Error::malformed(line_no, "outputs", format!("expert {k}: expected an array")))?;
        if v.len() != schema.output_dim {
            return Err(Error::SchemaMismatch {
                line: Some(line_no),
                expected: format!("d={}", schema.output_dim),
                found: format!("expert {k} vector length {}", v.len()),
            });
        }
        for x in v {
            flat.push(x.as_f64().ok_or_else(|| {
                Error::malformed(line_no, "outputs", format!("expert {k}: non-numeric entry {x}"))
            })?);
        }
    }
    Ok(ExpertOutputRecord::from_flat(
        id,
        domain,
        label,
        flat,
        schema.output_dim,
    ))
}
