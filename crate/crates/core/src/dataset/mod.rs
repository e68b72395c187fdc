//! Trajectory datasets in the NGSIM column layout: loading, smoothing and
//! merge-case extraction.
//!
//! Recorded coordinates keep the dataset orientation: `x` is the
//! longitudinal position (`Local_Y`) and `y` the lateral one (`Local_X`,
//! growing to the right). Merge cases are re-expressed in the road frame.

mod extract;
mod smoothing;

pub use extract::{extract_merge_cases, ExtractConfig, Extraction, MergeCase};
pub use smoothing::{smooth_track, SavitzkyGolay, Smoothed, DEFAULT_POLYORDER, DEFAULT_WINDOW};

pub use crate::selection::select_interacting;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact international foot.
pub const FEET_TO_METERS: f64 = 0.3048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    #[default]
    Feet,
    Meters,
}

impl Units {
    pub fn to_meters(self) -> f64 {
        match self {
            Units::Feet => FEET_TO_METERS,
            Units::Meters => 1.0,
        }
    }
}

/// Column names and conventions of an input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemaMap {
    pub vehicle_id: String,
    pub frame_id: String,
    pub global_time: String,
    pub local_x: String,
    pub local_y: String,
    pub v_vel: String,
    pub v_length: String,
    pub v_width: String,
    pub lane_id: String,
    /// Length and speed units of the file.
    pub units: Units,
    /// Time between frames (s).
    pub frame_period: f64,
    /// On-ramp and auxiliary lanes.
    pub ramp_lane_ids: Vec<i64>,
    /// Lanes a merge can end in.
    pub main_lane_ids: Vec<i64>,
    /// Longitudinal end of the auxiliary lane, in file units. Estimated from
    /// the data when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merge_lane_end: Option<f64>,
}

impl Default for SchemaMap {
    fn default() -> Self {
        Self {
            vehicle_id: "Vehicle_ID".into(),
            frame_id: "Frame_ID".into(),
            global_time: "Global_Time".into(),
            local_x: "Local_X".into(),
            local_y: "Local_Y".into(),
            v_vel: "v_Vel".into(),
            v_length: "v_Length".into(),
            v_width: "v_Width".into(),
            lane_id: "Lane_ID".into(),
            units: Units::Feet,
            frame_period: 0.1,
            ramp_lane_ids: vec![6, 7],
            main_lane_ids: vec![1, 2, 3, 4, 5],
            merge_lane_end: None,
        }
    }
}

impl SchemaMap {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&s);
        let map: SchemaMap = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::config(e.path().to_string(), e.into_inner().to_string()))?;
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_period.is_finite() && self.frame_period > 0.0) {
            return Err(Error::config("frame_period", "must be positive"));
        }
        if self.ramp_lane_ids.is_empty() {
            return Err(Error::config("ramp_lane_ids", "must not be empty"));
        }
        if let Some(l) = self.ramp_lane_ids.iter().find(|l| self.main_lane_ids.contains(l)) {
            return Err(Error::config("ramp_lane_ids", format!("lane {l} is also a main lane")));
        }
        Ok(())
    }

    fn columns(&self) -> [&str; 9] {
        [
            &self.vehicle_id,
            &self.frame_id,
            &self.global_time,
            &self.local_x,
            &self.local_y,
            &self.v_vel,
            &self.v_length,
            &self.v_width,
            &self.lane_id,
        ]
    }
}

/// One frame of a track, in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackFrame {
    pub frame: i64,
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    /// Heading from the smoothed derivatives; zero for raw tracks.
    pub psi: f64,
    pub lane: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedTrack {
    pub id: u32,
    pub length: f64,
    pub width: f64,
    /// Consecutive frames.
    pub frames: Vec<TrackFrame>,
}

impl RecordedTrack {
    pub fn frame(&self, frame: i64) -> Option<&TrackFrame> {
        let first = self.frames.first()?.frame;
        usize::try_from(frame - first).ok().and_then(|i| self.frames.get(i))
    }
}

/// A problem with part of the input that did not stop the load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// 1-based data row, header excluded.
    pub row: Option<usize>,
    pub vehicle: Option<u32>,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(r) = self.row {
            write!(f, "row {r}: ")?;
        }
        if let Some(v) = self.vehicle {
            write!(f, "vehicle {v}: ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    /// Sorted by id.
    pub tracks: Vec<RecordedTrack>,
    pub diagnostics: Vec<Diagnostic>,
}

struct Row {
    row: usize,
    frame: TrackFrame,
    length: f64,
    width: f64,
}

/// Reads a CSV with a header row. Missing columns and unparsable cells are
/// errors; out-of-order rows and frame gaps are dropped with diagnostics.
pub fn read_dataset<R: Read>(reader: R, map: &SchemaMap) -> Result<Dataset> {
    map.validate()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Dataset::default();
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
        Err(_) => csv::StringRecord::new(),
    };
    if headers.is_empty() {
        log::warn!("empty dataset");
        out.diagnostics.push(Diagnostic {
            row: None,
            vehicle: None,
            message: "empty file".into(),
        });
        return Ok(out);
    }
    let mut idx = [0usize; 9];
    let missing: Vec<&str> = map
        .columns()
        .iter()
        .zip(idx.iter_mut())
        .filter_map(|(name, slot)| match headers.iter().position(|h| h == *name) {
            Some(i) => {
                *slot = i;
                None
            }
            None => Some(*name),
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::Dataset(format!("missing columns: {}", missing.join(", "))));
    }
    let k = map.units.to_meters();
    let mut by_vehicle: BTreeMap<u32, Vec<Row>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let cell = |c: usize| -> Result<f64> {
            let s = rec.get(idx[c]).unwrap_or("");
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Dataset(format!("row {row}: column {} has bad value {s:?}", map.columns()[c])))
        };
        let int = |c: usize| -> Result<i64> {
            let v = cell(c)?;
            if v.fract() != 0.0 {
                return Err(Error::Dataset(format!("row {row}: column {} must be an integer", map.columns()[c])));
            }
            Ok(v as i64)
        };
        let id = u32::try_from(int(0)?)
            .map_err(|_| Error::Dataset(format!("row {row}: vehicle id out of range")))?;
        let frame = int(1)?;
        let _global_time = cell(2)?;
        by_vehicle.entry(id).or_default().push(Row {
            row,
            frame: TrackFrame {
                frame,
                time: frame as f64 * map.frame_period,
                x: cell(4)? * k,
                y: cell(3)? * k,
                v: cell(5)? * k,
                psi: 0.0,
                lane: int(8)?,
            },
            length: cell(6)? * k,
            width: cell(7)? * k,
        });
    }
    for (id, rows) in by_vehicle {
        if let Some(t) = assemble(id, rows, &mut out.diagnostics) {
            out.tracks.push(t);
        }
    }
    Ok(out)
}

fn assemble(id: u32, rows: Vec<Row>, diags: &mut Vec<Diagnostic>) -> Option<RecordedTrack> {
    // keep rows in file order while timestamps increase
    let mut kept: Vec<&Row> = Vec::with_capacity(rows.len());
    for r in &rows {
        match kept.last() {
            Some(last) if r.frame.frame <= last.frame.frame => diags.push(Diagnostic {
                row: Some(r.row),
                vehicle: Some(id),
                message: format!("frame {} does not follow frame {}; row dropped", r.frame.frame, last.frame.frame),
            }),
            _ => kept.push(r),
        }
    }
    // longest run of consecutive frames
    let mut best = (0, 0);
    let mut start = 0;
    for i in 1..=kept.len() {
        if i == kept.len() || kept[i].frame.frame != kept[i - 1].frame.frame + 1 {
            if i - start > best.1 - best.0 {
                best = (start, i);
            }
            if i < kept.len() {
                diags.push(Diagnostic {
                    row: Some(kept[i].row),
                    vehicle: Some(id),
                    message: format!("gap from frame {} to {}", kept[i - 1].frame.frame, kept[i].frame.frame),
                });
            }
            start = i;
        }
    }
    let run = &kept[best.0..best.1];
    if run.len() < kept.len() {
        diags.push(Diagnostic {
            row: None,
            vehicle: Some(id),
            message: format!("kept the longest gap-free run of {} of {} frames", run.len(), kept.len()),
        });
    }
    let first = run.first()?;
    Some(RecordedTrack {
        id,
        length: first.length,
        width: first.width,
        frames: run.iter().map(|r| r.frame).collect(),
    })
}

pub fn load_dataset(path: impl AsRef<Path>, map: &SchemaMap) -> Result<Dataset> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(std::io::BufReader::new(f), map)
}

/// Writes tracks with the map's column names and units.
pub fn write_dataset<W: Write>(writer: W, tracks: &[RecordedTrack], map: &SchemaMap) -> Result<()> {
    let k = map.units.to_meters();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(map.columns())?;
    for t in tracks {
        for f in &t.frames {
            w.write_record([
                t.id.to_string(),
                f.frame.to_string(),
                format!("{}", (f.time * 1000.0).round() as i64),
                format!("{}", f.y / k),
                format!("{}", f.x / k),
                format!("{}", f.v / k),
                format!("{}", t.length / k),
                format!("{}", t.width / k),
                f.lane.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "\
Vehicle_ID,Frame_ID,Global_Time,Local_X,Local_Y,v_Vel,v_Length,v_Width,Lane_ID
1,10,1000,10,100,50,15,6,7
1,11,1100,10,105,50,15,6,7
2,10,1000,22,90,40,14,6,5
1,12,1200,10,110,50,15,6,7
2,11,1100,22,94,40,14,6,5
";

    #[test]
    fn two_vehicles() {
        let d = read_dataset(CSV.as_bytes(), &SchemaMap::default()).unwrap();
        assert_eq!(d.tracks.len(), 2);
        assert_eq!(d.tracks[0].frames.len(), 3);
        assert_eq!(d.tracks[1].frames.len(), 2);
        let f = d.tracks[0].frames[0];
        assert!((f.y - 3.048).abs() < 1e-12);
        assert!((f.time - 1.0).abs() < 1e-12);
        assert!(d.diagnostics.is_empty());
    }

    #[test]
    fn empty_file_warns() {
        let d = read_dataset("".as_bytes(), &SchemaMap::default()).unwrap();
        assert!(d.tracks.is_empty());
        assert_eq!(d.diagnostics.len(), 1);
    }

    #[test]
    fn missing_column_is_an_error() {
        let err = read_dataset("Vehicle_ID,Frame_ID\n1,2\n".as_bytes(), &SchemaMap::default()).unwrap_err();
        assert!(err.to_string().contains("Lane_ID"));
    }

    #[test]
    fn bad_cell_names_row() {
        let csv = CSV.replace("1,11,1100,10,105", "1,11,1100,ten,105");
        let err = read_dataset(csv.as_bytes(), &SchemaMap::default()).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn out_of_order_and_gaps() {
        let csv = "\
Vehicle_ID,Frame_ID,Global_Time,Local_X,Local_Y,v_Vel,v_Length,v_Width,Lane_ID
3,5,0,0,0,0,15,6,1
3,6,0,0,1,0,15,6,1
3,4,0,0,2,0,15,6,1
3,9,0,0,3,0,15,6,1
";
        let d = read_dataset(csv.as_bytes(), &SchemaMap::default()).unwrap();
        assert_eq!(d.tracks[0].frames.len(), 2);
        let rows: Vec<Option<usize>> = d.diagnostics.iter().map(|g| g.row).collect();
        assert!(rows.contains(&Some(3)));
        assert!(rows.contains(&Some(4)));
    }

    #[test]
    fn remapped_columns_in_meters() {
        let map: SchemaMap = serde_json::from_str(
            r#"{"vehicle_id": "id", "frame_id": "f", "global_time": "t", "local_x": "lat", "local_y": "lon",
                "v_vel": "v", "v_length": "len", "v_width": "wid", "lane_id": "lane", "units": "meters",
                "ramp_lane_ids": [9], "main_lane_ids": [1]}"#,
        )
        .unwrap();
        let d = read_dataset("id,f,t,lat,lon,v,len,wid,lane\n4,1,0,3,10,20,5,2,9\n".as_bytes(), &map).unwrap();
        let f = d.tracks[0].frames[0];
        assert_eq!((f.x, f.y, f.v, f.lane), (10.0, 3.0, 20.0, 9));
    }

    #[test]
    fn write_then_read() {
        let map = SchemaMap::default();
        let d = read_dataset(CSV.as_bytes(), &map).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &d.tracks, &map).unwrap();
        let back = read_dataset(buf.as_slice(), &map).unwrap();
        for (a, b) in d.tracks.iter().zip(&back.tracks) {
            assert_eq!(a.frames.len(), b.frames.len());
            for (fa, fb) in a.frames.iter().zip(&b.frames) {
                assert!((fa.x - fb.x).abs() < 1e-9 && (fa.y - fb.y).abs() < 1e-9 && (fa.v - fb.v).abs() < 1e-9);
            }
        }
    }
}
