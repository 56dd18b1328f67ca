//! Time-series ingestion and supervised windowing.
//!
//! A [`TimeSeriesFrame`] stores `T` steps of `c` channels row-major (one row per
//! time step). Frames are split chronologically, z-scored with statistics fitted
//! on the training segment only, and cut into `(input, label)` window pairs.
//!
//! Conventions
//! -----------
//! - Standard deviations use the population (`1/N`) convention.
//! - Ratio flooring remainders are assigned to the test split.
//! - Missing or non-finite cells are rejected at load time.
//! - Val/test windows may take their lookback from the preceding split; their
//!   label slice never leaves the segment (see [`make_segment_windows`]).

use std::io::Read;
use std::path::Path;

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{OlmaError, Result};

/// A `T × c` real-valued multivariate series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    values: Array2<f64>,
    channel_names: Vec<String>,
    /// Absolute step index of row 0 (non-zero for split segments).
    start: usize,
    timestamps: Option<Vec<String>>,
}

impl TimeSeriesFrame {
    /// Builds a frame from a `T × c` matrix. Channel names default to `ch0..`.
    pub fn new(values: Array2<f64>, channel_names: Option<Vec<String>>) -> Result<Self> {
        let (steps, channels) = values.dim();
        if steps == 0 || channels == 0 {
            return Err(OlmaError::Empty(
                "frame needs at least one step and one channel",
            ));
        }
        for ((row, column), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(OlmaError::NonFinite { row, column });
            }
        }
        let channel_names = match channel_names {
            Some(names) if names.len() != channels => {
                return Err(OlmaError::Shape(format!(
                    "{} channel names for {} channels",
                    names.len(),
                    channels
                )))
            }
            Some(names) => names,
            None => (0..channels).map(|i| format!("ch{i}")).collect(),
        };
        Ok(Self {
            values,
            channel_names,
            start: 0,
            timestamps: None,
        })
    }

    pub fn with_timestamps(mut self, timestamps: Vec<String>) -> Result<Self> {
        if timestamps.len() != self.len() {
            return Err(OlmaError::Shape(format!(
                "{} timestamps for {} steps",
                timestamps.len(),
                self.len()
            )));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    /// Number of time steps `T`.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of channels `c`.
    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    /// Absolute step index of the first row.
    pub fn start(&self) -> usize {
        self.start
    }

    /// Rows `[from, to)` as a new frame whose `start` is shifted accordingly.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.len() {
            return Err(OlmaError::InvalidArgument(format!(
                "slice [{from}, {to}) of a frame with {} steps",
                self.len()
            )));
        }
        Ok(Self {
            values: self.values.slice(s![from..to, ..]).to_owned(),
            channel_names: self.channel_names.clone(),
            start: self.start + from,
            timestamps: self.timestamps.as_ref().map(|t| t[from..to].to_vec()),
        })
    }

    fn map_values(&self, values: Array2<f64>) -> Self {
        Self {
            values,
            channel_names: self.channel_names.clone(),
            start: self.start,
            timestamps: self.timestamps.clone(),
        }
    }
}

/// Reads a comma-separated file. `date_column`, when given, is stored as opaque
/// timestamps and excluded from the values.
pub fn load_csv(
    path: impl AsRef<Path>,
    has_header: bool,
    date_column: Option<usize>,
) -> Result<TimeSeriesFrame> {
    let file = std::fs::File::open(path)?;
    read_csv(file, has_header, date_column)
}

/// Same as [`load_csv`] over any reader. Reported rows and columns are 1-based
/// positions in the file.
pub fn read_csv<R: Read>(
    reader: R,
    has_header: bool,
    date_column: Option<usize>,
) -> Result<TimeSeriesFrame> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut names: Option<Vec<String>> = None;
    let mut data: Vec<f64> = Vec::new();
    let mut stamps: Vec<String> = Vec::new();
    let mut width: Option<usize> = None;
    let mut steps = 0usize;

    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let row = line + 1;
        if let Some(dc) = date_column {
            if dc >= record.len() {
                return Err(OlmaError::Parse {
                    row,
                    column: dc + 1,
                    message: "date column out of range".into(),
                });
            }
        }
        if line == 0 && has_header {
            names = Some(
                record
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| Some(*i) != date_column)
                    .map(|(_, name)| name.to_string())
                    .collect(),
            );
            continue;
        }
        let mut count = 0;
        for (i, cell) in record.iter().enumerate() {
            if Some(i) == date_column {
                stamps.push(cell.to_string());
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| OlmaError::Parse {
                row,
                column: i + 1,
                message: format!("cannot parse `{cell}` as a number"),
            })?;
            if !value.is_finite() {
                return Err(OlmaError::NonFinite { row, column: i + 1 });
            }
            data.push(value);
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(OlmaError::Parse {
                    row,
                    column: record.len(),
                    message: format!("expected {w} value columns, found {count}"),
                })
            }
            _ => {}
        }
        steps += 1;
    }

    let width = match width {
        Some(w) if steps > 0 && w > 0 => w,
        _ => return Err(OlmaError::Empty("csv has no data rows")),
    };
    let values = Array2::from_shape_vec((steps, width), data)
        .map_err(|e| OlmaError::Shape(e.to_string()))?;
    let frame = TimeSeriesFrame::new(values, names)?;
    if date_column.is_some() {
        frame.with_timestamps(stamps)
    } else {
        Ok(frame)
    }
}

/// Segment lengths for a chronological split of `steps` rows.
pub fn split_lengths(steps: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    for r in ratios {
        if !(r > 0.0 && r < 1.0) {
            return Err(OlmaError::InvalidArgument(format!(
                "split ratio {r} outside (0, 1)"
            )));
        }
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(OlmaError::InvalidArgument(format!(
            "split ratios sum to {total}, expected 1"
        )));
    }
    // The nudge keeps products like 0.29 * 100 from flooring to 28.
    let floor = |r: f64| (r * steps as f64 + 1e-9).floor() as usize;
    let train = floor(ratios[0]);
    let val = floor(ratios[1]);
    let test = steps.saturating_sub(train + val);
    if train == 0 || val == 0 || test == 0 {
        return Err(OlmaError::InvalidArgument(format!(
            "split of {steps} steps gives an empty segment ({train}, {val}, {test})"
        )));
    }
    Ok([train, val, test])
}

/// Splits into contiguous `(train, val, test)` segments.
pub fn chronological_split(
    frame: &TimeSeriesFrame,
    ratios: [f64; 3],
) -> Result<(TimeSeriesFrame, TimeSeriesFrame, TimeSeriesFrame)> {
    let [train, val, _] = split_lengths(frame.len(), ratios)?;
    Ok((
        frame.slice(0, train)?,
        frame.slice(train, train + val)?,
        frame.slice(train + val, frame.len())?,
    ))
}

/// Per-channel z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Fits population mean and standard deviation per channel.
    pub fn fit(frame: &TimeSeriesFrame) -> Result<Self> {
        let values = frame.values();
        let n = values.nrows() as f64;
        let mean: Array1<f64> = values.sum_axis(Axis(0)) / n;
        let mut std = Vec::with_capacity(frame.channels());
        for (i, column) in values.axis_iter(Axis(1)).enumerate() {
            let var = column.iter().map(|v| (v - mean[i]).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if !(sd > 1e-12 * mean[i].abs().max(1.0)) {
                return Err(OlmaError::ZeroVariance(frame.channel_names()[i].clone()));
            }
            std.push(sd);
        }
        Ok(Self {
            mean: mean.to_vec(),
            std,
        })
    }

    fn check(&self, frame: &TimeSeriesFrame) -> Result<()> {
        if frame.channels() != self.mean.len() {
            return Err(OlmaError::Shape(format!(
                "stats for {} channels applied to {} channels",
                self.mean.len(),
                frame.channels()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        self.check(frame)?;
        let mut values = frame.values().to_owned();
        for (i, mut column) in values.axis_iter_mut(Axis(1)).enumerate() {
            column.mapv_inplace(|v| (v - self.mean[i]) / self.std[i]);
        }
        Ok(frame.map_values(values))
    }

    pub fn invert(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        self.check(frame)?;
        let mut values = frame.values().to_owned();
        for (i, mut column) in values.axis_iter_mut(Axis(1)).enumerate() {
            column.mapv_inplace(|v| v * self.std[i] + self.mean[i]);
        }
        Ok(frame.map_values(values))
    }
}

/// Fits statistics on `train` and normalizes `train` followed by every frame in
/// `others`, in order.
pub fn zscore_fit_apply(
    train: &TimeSeriesFrame,
    others: &[&TimeSeriesFrame],
) -> Result<(NormStats, Vec<TimeSeriesFrame>)> {
    let stats = NormStats::fit(train)?;
    let mut out = Vec::with_capacity(others.len() + 1);
    out.push(stats.apply(train)?);
    for frame in others {
        out.push(stats.apply(frame)?);
    }
    Ok((stats, out))
}

/// Supervised `(input, label)` window pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    /// `B × l_in × c`
    pub inputs: Array3<f64>,
    /// `B × l_out × c`
    pub labels: Array3<f64>,
    /// Absolute step index of each window's first input row.
    pub origin_indices: Vec<usize>,
}

impl WindowSet {
    pub fn new(
        inputs: Array3<f64>,
        labels: Array3<f64>,
        origin_indices: Vec<usize>,
    ) -> Result<Self> {
        let (b, _, c) = inputs.dim();
        let (lb, _, lc) = labels.dim();
        if b != lb || c != lc || origin_indices.len() != b {
            return Err(OlmaError::Shape(format!(
                "inputs {:?}, labels {:?}, {} origins",
                inputs.dim(),
                labels.dim(),
                origin_indices.len()
            )));
        }
        Ok(Self {
            inputs,
            labels,
            origin_indices,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len_of(Axis(0))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_len(&self) -> usize {
        self.inputs.len_of(Axis(1))
    }

    pub fn horizon(&self) -> usize {
        self.labels.len_of(Axis(1))
    }

    pub fn channels(&self) -> usize {
        self.inputs.len_of(Axis(2))
    }

    /// Gathers the windows at `indices` (in the given order).
    pub fn select(&self, indices: &[usize]) -> WindowSet {
        WindowSet {
            inputs: self.inputs.select(Axis(0), indices),
            labels: self.labels.select(Axis(0), indices),
            origin_indices: indices.iter().map(|&i| self.origin_indices[i]).collect(),
        }
    }
}

fn check_window_args(l_in: usize, l_out: usize, stride: usize) -> Result<()> {
    if l_in == 0 || l_out == 0 || stride == 0 {
        return Err(OlmaError::InvalidArgument(format!(
            "window lengths and stride must be >= 1 (l_in={l_in}, l_out={l_out}, stride={stride})"
        )));
    }
    Ok(())
}

fn gather_windows(
    values: ArrayView2<'_, f64>,
    first_origin: usize,
    count: usize,
    l_in: usize,
    l_out: usize,
    stride: usize,
    base: usize,
) -> WindowSet {
    let c = values.ncols();
    let mut inputs = Array3::zeros((count, l_in, c));
    let mut labels = Array3::zeros((count, l_out, c));
    let mut origins = Vec::with_capacity(count);
    for b in 0..count {
        let o = first_origin + b * stride;
        inputs
            .index_axis_mut(Axis(0), b)
            .assign(&values.slice(s![o..o + l_in, ..]));
        labels
            .index_axis_mut(Axis(0), b)
            .assign(&values.slice(s![o + l_in..o + l_in + l_out, ..]));
        origins.push(base + o);
    }
    WindowSet {
        inputs,
        labels,
        origin_indices: origins,
    }
}

/// Slides a `(l_in, l_out)` window over the whole frame.
pub fn make_windows(
    frame: &TimeSeriesFrame,
    l_in: usize,
    l_out: usize,
    stride: usize,
) -> Result<WindowSet> {
    check_window_args(l_in, l_out, stride)?;
    let steps = frame.len();
    if steps < l_in + l_out {
        return Err(OlmaError::InvalidArgument(format!(
            "frame of {steps} steps is shorter than l_in + l_out = {}",
            l_in + l_out
        )));
    }
    let count = (steps - l_in - l_out) / stride + 1;
    Ok(gather_windows(
        frame.values(),
        0,
        count,
        l_in,
        l_out,
        stride,
        frame.start(),
    ))
}

/// Windows whose labels lie inside `segment`, taking inputs from `full`.
///
/// `segment` must be a slice of `full` (as produced by [`chronological_split`]).
/// The input slice may start up to `l_in` steps before the segment so that the
/// first label lands on the segment's first step; labels never leave the segment.
pub fn make_segment_windows(
    full: &TimeSeriesFrame,
    segment: &TimeSeriesFrame,
    l_in: usize,
    l_out: usize,
    stride: usize,
) -> Result<WindowSet> {
    check_window_args(l_in, l_out, stride)?;
    let seg_start = segment
        .start()
        .checked_sub(full.start())
        .ok_or_else(|| OlmaError::InvalidArgument("segment precedes the full frame".into()))?;
    let seg_end = seg_start + segment.len();
    if seg_end > full.len() || full.channels() != segment.channels() {
        return Err(OlmaError::Shape(
            "segment is not a slice of the full frame".into(),
        ));
    }
    let first_origin = seg_start.saturating_sub(l_in);
    if seg_end < first_origin + l_in + l_out {
        return Err(OlmaError::InvalidArgument(format!(
            "segment of {} steps cannot hold a horizon of {l_out}",
            segment.len()
        )));
    }
    let count = (seg_end - first_origin - l_in - l_out) / stride + 1;
    Ok(gather_windows(
        full.values(),
        first_origin,
        count,
        l_in,
        l_out,
        stride,
        full.start(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn frame(values: Array2<f64>) -> TimeSeriesFrame {
        TimeSeriesFrame::new(values, None).unwrap()
    }

    #[test]
    fn parses_plain_csv() {
        let f = read_csv("1,2\n3,4\n5,6".as_bytes(), false, None).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.channels(), 2);
        assert_eq!(f.values(), array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
    }

    #[test]
    fn header_and_date_column() {
        let text = "date,a,b\n2016-07-01 00:00,1,2\n2016-07-01 01:00,3,4\n";
        let f = read_csv(text.as_bytes(), true, Some(0)).unwrap();
        assert_eq!(f.channels(), 2);
        assert_eq!(f.channel_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(f.timestamps().unwrap()[1], "2016-07-01 01:00");
    }

    #[test]
    fn nan_cell_names_position() {
        let err = read_csv("1,2\n3,NaN\n".as_bytes(), false, None).unwrap_err();
        match err {
            OlmaError::NonFinite { row, column } => assert_eq!((row, column), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn garbage_cell_is_parse_error() {
        let err = read_csv("1,2\nx,4\n".as_bytes(), false, None).unwrap_err();
        assert!(matches!(
            err,
            OlmaError::Parse {
                row: 2,
                column: 1,
                ..
            }
        ));
    }

    #[test]
    fn empty_csv_is_error() {
        assert!(matches!(
            read_csv("".as_bytes(), false, None),
            Err(OlmaError::Empty(_))
        ));
        assert!(read_csv("a,b\n".as_bytes(), true, None).is_err());
    }

    #[test]
    fn split_lengths_floor_rule() {
        assert_eq!(split_lengths(100, [0.6, 0.2, 0.2]).unwrap(), [60, 20, 20]);
        assert_eq!(split_lengths(10, [0.6, 0.2, 0.2]).unwrap(), [6, 2, 2]);
        assert_eq!(split_lengths(11, [0.6, 0.2, 0.2]).unwrap(), [6, 2, 3]);
        assert!(split_lengths(3, [0.6, 0.2, 0.2]).is_err());
        assert!(split_lengths(10, [0.5, 0.2, 0.2]).is_err());
    }

    #[test]
    fn split_reassembles() {
        let values = Array2::from_shape_fn((11, 2), |(t, c)| (t * 10 + c) as f64);
        let f = frame(values.clone());
        let (a, b, c) = chronological_split(&f, [0.6, 0.2, 0.2]).unwrap();
        assert_eq!((a.start(), b.start(), c.start()), (0, 6, 8));
        let joined = ndarray::concatenate![Axis(0), a.values(), b.values(), c.values()];
        assert_eq!(joined, values);
    }

    #[test]
    fn zscore_population_convention() {
        let train = frame(array![[0.0], [2.0]]);
        let other = frame(array![[3.0]]);
        let (stats, out) = zscore_fit_apply(&train, &[&other]).unwrap();
        assert_eq!(stats.mean, vec![1.0]);
        assert_eq!(stats.std, vec![1.0]);
        assert_eq!(out[0].values(), array![[-1.0], [1.0]]);
        assert_eq!(out[1].values(), array![[2.0]]);
    }

    #[test]
    fn constant_channel_rejected() {
        let train = TimeSeriesFrame::new(
            array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]],
            Some(vec!["ok".into(), "flat".into()]),
        )
        .unwrap();
        match NormStats::fit(&train) {
            Err(OlmaError::ZeroVariance(name)) => assert_eq!(name, "flat"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn window_enumeration() {
        let f = frame(Array2::from_shape_fn((5, 1), |(t, _)| t as f64));
        let w = make_windows(&f, 2, 1, 1).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w.inputs.slice(s![0, .., 0]).to_vec(), vec![0.0, 1.0]);
        assert_eq!(w.labels.slice(s![0, .., 0]).to_vec(), vec![2.0]);
        assert_eq!(w.origin_indices, vec![0, 1, 2]);

        let short = frame(Array2::zeros((3, 1)));
        assert!(make_windows(&short, 2, 2, 1).is_err());
        let exact = frame(Array2::zeros((4, 1)));
        assert_eq!(make_windows(&exact, 2, 2, 1).unwrap().len(), 1);
    }

    #[test]
    fn stride_count() {
        let f = frame(Array2::zeros((20, 2)));
        // (20 - 4 - 2) / 3 + 1 = 5
        assert_eq!(make_windows(&f, 4, 2, 3).unwrap().len(), 5);
    }

    #[test]
    fn segment_windows_borrow_lookback_only() {
        let values = Array2::from_shape_fn((20, 1), |(t, _)| t as f64);
        let full = frame(values);
        let (train, val, _) = chronological_split(&full, [0.6, 0.2, 0.2]).unwrap();
        let w = make_segment_windows(&full, &val, 3, 2, 1).unwrap();
        // val covers steps 12..16; labels must start at 12 and end by 16.
        assert_eq!(w.labels[[0, 0, 0]], 12.0);
        assert_eq!(w.inputs[[0, 0, 0]], 9.0);
        assert_eq!(w.len(), 3);
        let last = w.len() - 1;
        assert_eq!(w.labels[[last, 1, 0]], 15.0);

        let tw = make_segment_windows(&full, &train, 3, 2, 1).unwrap();
        assert_eq!(tw, make_windows(&train, 3, 2, 1).unwrap());
    }
}
