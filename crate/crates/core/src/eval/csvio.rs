//! CSV forms of sweeps, JSMA tables and fooling curves. Lines starting with
//! `#` carry provenance and are skipped on reading.

use super::{JsmaRow, JsmaTable, SweepCurve, SweepPoint};
use crate::attacks::FoolingPoint;
use crate::error::{Error, Result};

const SWEEP_HEADER: [&str; 8] = [
    "attack",
    "param",
    "accuracy",
    "mean_l2_distortion_pct",
    "n",
    "seed",
    "mean_l2",
    "param_fraction",
];
const SWEEP_NOTE: &str = "# mean_l2_distortion_pct = 100 * mean ||delta||_2 / sqrt(d); mean_l2 = mean ||delta||_2; both over successful attacks\n";
const JSMA_HEADER: [&str; 5] = ["n", "gamma", "asr", "pert_rate", "success_pert_rate"];
const FOOLING_HEADER: [&str; 4] = ["eps", "asr", "margin", "n"];

fn finish(w: csv::Writer<Vec<u8>>, preamble: &str) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::arg(e.to_string()))?;
    Ok(format!("{preamble}{}", String::from_utf8(bytes).expect("utf-8")))
}

fn reader<'a>(text: &'a str, header: &[&str]) -> Result<csv::Reader<&'a [u8]>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    if r.headers()?.iter().collect::<Vec<_>>() != header {
        return Err(Error::Parse {
            source_name: "csv".into(),
            offset: 0,
            message: format!("expected header {}", header.join(",")),
        });
    }
    Ok(r)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec[i].parse().map_err(|_| Error::Parse {
        source_name: "csv".into(),
        offset: rec.position().map_or(0, |p| p.byte() as usize),
        message: format!("bad value `{}` in column {i}", &rec[i]),
    })
}

/// `preamble` is copied verbatim before the rows (e.g. a manifest line).
pub fn sweep_to_csv(curve: &SweepCurve, preamble: &str) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    for p in &curve.points {
        w.write_record([
            curve.attack.clone(),
            p.param.to_string(),
            p.accuracy.to_string(),
            p.mean_l2_distortion_pct.to_string(),
            p.n.to_string(),
            p.seed.to_string(),
            p.mean_l2.to_string(),
            p.param_fraction.map_or(String::new(), |f| f.to_string()),
        ])?;
    }
    finish(w, &format!("{preamble}{SWEEP_NOTE}"))
}

pub fn sweep_from_csv(text: &str) -> Result<SweepCurve> {
    let mut r = reader(text, &SWEEP_HEADER)?;
    let mut attack = None;
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        attack.get_or_insert_with(|| rec[0].to_string());
        points.push(SweepPoint {
            param: field(&rec, 1)?,
            accuracy: field(&rec, 2)?,
            mean_l2_distortion_pct: field(&rec, 3)?,
            n: field(&rec, 4)?,
            seed: field(&rec, 5)?,
            mean_l2: field(&rec, 6)?,
            param_fraction: if rec[7].is_empty() { None } else { Some(field(&rec, 7)?) },
        });
    }
    Ok(SweepCurve {
        attack: attack.ok_or_else(|| Error::arg("sweep csv has no rows"))?,
        points,
    })
}

pub fn jsma_table_to_csv(table: &JsmaTable, preamble: &str) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(JSMA_HEADER)?;
    for r in &table.rows {
        w.write_record([
            r.n_sources.to_string(),
            r.gamma.to_string(),
            r.asr.to_string(),
            r.pert_rate.to_string(),
            r.success_pert_rate.to_string(),
        ])?;
    }
    finish(w, preamble)
}

pub fn jsma_table_from_csv(text: &str) -> Result<JsmaTable> {
    let mut r = reader(text, &JSMA_HEADER)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(JsmaRow {
            n_sources: field(&rec, 0)?,
            gamma: field(&rec, 1)?,
            asr: field(&rec, 2)?,
            pert_rate: field(&rec, 3)?,
            success_pert_rate: field(&rec, 4)?,
        });
    }
    Ok(JsmaTable { rows })
}

pub fn fooling_to_csv(points: &[FoolingPoint], preamble: &str) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FOOLING_HEADER)?;
    for p in points {
        w.write_record([p.eps.to_string(), p.asr.to_string(), p.margin.to_string(), p.n.to_string()])?;
    }
    finish(w, preamble)
}

pub fn fooling_from_csv(text: &str) -> Result<Vec<FoolingPoint>> {
    let mut r = reader(text, &FOOLING_HEADER)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(FoolingPoint {
            eps: field(&rec, 0)?,
            asr: field(&rec, 1)?,
            margin: field(&rec, 2)?,
            n: field(&rec, 3)?,
        });
    }
    Ok(out)
}
