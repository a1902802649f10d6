//! CSV ingestion and cleaning for World Weather Repository exports.
//!
//! The raw export is one row per (country, update timestamp) with weather
//! readings, pollutant concentrations, and the UK DEFRA air-quality index
//! (1-10). [`clean`] turns it into validated daily records: rows with
//! unparseable or out-of-range cells are dropped and counted, and multiple
//! updates on the same calendar day collapse to the latest one.
//!
//! Cleaning is idempotent: re-ingesting a cleaned table (as written by the
//! pipeline's `clean.csv`, which stores dates and compass codes back in the
//! same columns) reproduces the same records.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

/// Columns that must be present in an input table, in documentation order.
/// Extra columns are ignored.
pub const REQUIRED_COLUMNS: [&str; 21] = [
    "country",
    "last_updated",
    "temperature_celsius",
    "wind_mph",
    "wind_degree",
    "wind_direction",
    "pressure_mb",
    "precip_mm",
    "humidity",
    "cloud",
    "feels_like_celsius",
    "visibility_km",
    "uv_index",
    "gust_mph",
    "air_quality_Carbon_Monoxide",
    "air_quality_Ozone",
    "air_quality_Nitrogen_dioxide",
    "air_quality_Sulphur_dioxide",
    "air_quality_PM2.5",
    "air_quality_PM10",
    "air_quality_gb-defra-index",
];

/// Model feature columns in their fixed order. The wind direction
/// contributes as its 16-point compass code and the DEFRA index is the last
/// feature (it doubles as the forecast target one day ahead).
pub const FEATURE_NAMES: [&str; 19] = [
    "temperature_celsius",
    "wind_mph",
    "wind_degree",
    "wind_direction",
    "pressure_mb",
    "precip_mm",
    "humidity",
    "cloud",
    "feels_like_celsius",
    "visibility_km",
    "uv_index",
    "gust_mph",
    "air_quality_Carbon_Monoxide",
    "air_quality_Ozone",
    "air_quality_Nitrogen_dioxide",
    "air_quality_Sulphur_dioxide",
    "air_quality_PM2.5",
    "air_quality_PM10",
    "air_quality_gb-defra-index",
];

/// Index of the DEFRA air-quality index within [`FEATURE_NAMES`].
pub const AQI_FEATURE: usize = 18;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path} contains no header row")]
    EmptyFile { path: String },
    #[error("missing required columns: {}", columns.join(", "))]
    MissingColumns { columns: Vec<String> },
}

/// An unvalidated table: the header row plus every data row as strings.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub source: String,
}

/// One validated daily observation for a country.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanRecord {
    pub country: String,
    pub date: NaiveDate,
    pub temperature_celsius: f64,
    pub wind_mph: f64,
    pub wind_degree: f64,
    /// 16-point compass code: N = 0, NNE = 1, ... NNW = 15.
    pub wind_direction_code: u8,
    pub pressure_mb: f64,
    pub precip_mm: f64,
    pub humidity: f64,
    pub cloud: f64,
    pub feels_like_celsius: f64,
    pub visibility_km: f64,
    pub uv_index: f64,
    pub gust_mph: f64,
    pub carbon_monoxide: f64,
    pub ozone: f64,
    pub nitrogen_dioxide: f64,
    pub sulphur_dioxide: f64,
    pub pm2_5: f64,
    pub pm10: f64,
    /// UK DEFRA index, 0-10. Zero is out of band and only tolerated here;
    /// banding clamps it to 1 and counts the clamp.
    pub aqi: u8,
}

impl CleanRecord {
    /// The 19 model features in [`FEATURE_NAMES`] order.
    pub fn features(&self) -> [f64; 19] {
        [
            self.temperature_celsius,
            self.wind_mph,
            self.wind_degree,
            self.wind_direction_code as f64,
            self.pressure_mb,
            self.precip_mm,
            self.humidity,
            self.cloud,
            self.feels_like_celsius,
            self.visibility_km,
            self.uv_index,
            self.gust_mph,
            self.carbon_monoxide,
            self.ozone,
            self.nitrogen_dioxide,
            self.sulphur_dioxide,
            self.pm2_5,
            self.pm10,
            self.aqi as f64,
        ]
    }
}

/// All records for one country, sorted by date with no duplicate dates.
#[derive(Debug, Clone)]
pub struct CountrySeries {
    pub country: String,
    pub records: Vec<CleanRecord>,
}

/// What [`clean`] did to the table: drop counts, duplicate collapses, and
/// per-reason warning counters (keys look like `out_of_range:humidity`).
#[derive(Debug, Clone, Default, Serialize)]
pub struct SchemaReport {
    pub input_rows: usize,
    pub kept_rows: usize,
    pub dropped_row_count: usize,
    pub duplicate_date_collapsed_count: usize,
    pub warning_counters: BTreeMap<String, usize>,
}

impl SchemaReport {
    fn warn(&mut self, key: String) {
        *self.warning_counters.entry(key).or_insert(0) += 1;
    }
}

/// Maps a wind direction cell to its 16-point compass code (N = 0 through
/// NNW = 15, clockwise). Numeric cells holding a code 0-15 are accepted too,
/// so cleaned tables survive a round trip.
pub fn wind_direction_code(text: &str) -> Option<u8> {
    let code = match text.trim().to_ascii_uppercase().as_str() {
        "N" => 0,
        "NNE" => 1,
        "NE" => 2,
        "ENE" => 3,
        "E" => 4,
        "ESE" => 5,
        "SE" => 6,
        "SSE" => 7,
        "S" => 8,
        "SSW" => 9,
        "SW" => 10,
        "WSW" => 11,
        "W" => 12,
        "WNW" => 13,
        "NW" => 14,
        "NNW" => 15,
        other => {
            let n: u8 = other.parse().ok()?;
            if n <= 15 {
                n
            } else {
                return None;
            }
        }
    };
    Some(code)
}

/// The compass label for a code produced by [`wind_direction_code`].
pub fn compass_label(code: u8) -> Option<&'static str> {
    const LABELS: [&str; 16] = [
        "N", "NNE", "NE", "ENE", "E", "ESE", "SE", "SSE", "S", "SSW", "SW", "WSW", "W", "WNW",
        "NW", "NNW",
    ];
    LABELS.get(code as usize).copied()
}

/// Reads a CSV file into a [`RawTable`]. Ragged rows and quoting errors are
/// reported as [`IngestError::Csv`]; a file without even a header row is
/// [`IngestError::EmptyFile`].
pub fn parse_csv(path: impl AsRef<Path>) -> Result<RawTable, IngestError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: display.clone(),
        source,
    })?;
    parse_csv_reader(file, &display)
}

/// Reader-based variant of [`parse_csv`]; `source` names the input in error
/// messages.
pub fn parse_csv_reader<R: Read>(reader: R, source: &str) -> Result<RawTable, IngestError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header: Vec<String> = csv_reader
        .headers()
        .map_err(|e| csv_error(source, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(IngestError::EmptyFile {
            path: source.to_string(),
        });
    }

    let mut rows = Vec::new();
    for record in csv_reader.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        rows.push(record.iter().map(str::to_owned).collect());
    }
    Ok(RawTable {
        header,
        rows,
        source: source.to_string(),
    })
}

fn csv_error(source: &str, e: csv::Error) -> IngestError {
    IngestError::Csv {
        path: source.to_string(),
        source: e,
    }
}

/// Validates every row of a raw table and collapses same-day duplicates.
///
/// A row is dropped (never partially kept) when any required cell fails to
/// parse or violates its range: all numeric cells must be finite, humidity
/// and cloud lie in 0-100, wind degrees in 0-360, the UV index is
/// non-negative, and the DEFRA index is an integer 0-10. Index value 0 is
/// accepted but counted under `aqi_zero_accepted`. When one country reports
/// several updates on a calendar day, the latest `last_updated` timestamp
/// wins and the collapse is counted.
///
/// The output keeps first-appearance row order; only [`group_by_country`]
/// imposes the sorted order the rest of the pipeline relies on.
pub fn clean(raw: &RawTable) -> Result<(Vec<CleanRecord>, SchemaReport), IngestError> {
    let mut positions = HashMap::new();
    for (idx, name) in raw.header.iter().enumerate() {
        let name = name.trim_start_matches('\u{feff}');
        positions.entry(name).or_insert(idx);
    }
    let missing: Vec<String> = REQUIRED_COLUMNS
        .iter()
        .filter(|name| !positions.contains_key(**name))
        .map(|n| n.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(IngestError::MissingColumns { columns: missing });
    }
    let col = |name: &str| positions[name];

    let mut report = SchemaReport {
        input_rows: raw.rows.len(),
        ..SchemaReport::default()
    };
    let mut records: Vec<CleanRecord> = Vec::with_capacity(raw.rows.len());
    // (country, date) -> (timestamp of the record we kept, index in `records`).
    let mut seen: HashMap<(String, NaiveDate), (NaiveDateTime, usize)> = HashMap::new();

    'rows: for row in &raw.rows {
        // The csv reader guarantees rectangular rows, so indexing is safe.
        let cell = |name: &str| row[col(name)].as_str();

        let country = cell("country").trim();
        if country.is_empty() {
            report.warn("unparseable:country".into());
            report.dropped_row_count += 1;
            continue;
        }
        let Some(timestamp) = parse_timestamp(cell("last_updated")) else {
            report.warn("unparseable:last_updated".into());
            report.dropped_row_count += 1;
            continue;
        };
        let Some(direction_code) = wind_direction_code(cell("wind_direction")) else {
            report.warn("unparseable:wind_direction".into());
            report.dropped_row_count += 1;
            continue;
        };

        // Numeric cells, validated in column order; the first offence names
        // the warning counter.
        let mut numbers = [0.0_f64; 18];
        for (slot, name) in NUMERIC_COLUMNS.iter().enumerate() {
            let text = cell(name);
            let Ok(value) = text.parse::<f64>() else {
                report.warn(format!("unparseable:{name}"));
                report.dropped_row_count += 1;
                continue 'rows;
            };
            if !value.is_finite() || !numeric_in_range(name, value) {
                report.warn(format!("out_of_range:{name}"));
                report.dropped_row_count += 1;
                continue 'rows;
            }
            numbers[slot] = value;
        }
        let aqi_raw = numbers[17];
        if aqi_raw.fract() != 0.0 || !(0.0..=10.0).contains(&aqi_raw) {
            report.warn("out_of_range:air_quality_gb-defra-index".into());
            report.dropped_row_count += 1;
            continue;
        }
        let aqi = aqi_raw as u8;
        if aqi == 0 {
            report.warn("aqi_zero_accepted".into());
        }

        let record = CleanRecord {
            country: country.to_string(),
            date: timestamp.date(),
            temperature_celsius: numbers[0],
            wind_mph: numbers[1],
            wind_degree: numbers[2],
            wind_direction_code: direction_code,
            pressure_mb: numbers[3],
            precip_mm: numbers[4],
            humidity: numbers[5],
            cloud: numbers[6],
            feels_like_celsius: numbers[7],
            visibility_km: numbers[8],
            uv_index: numbers[9],
            gust_mph: numbers[10],
            carbon_monoxide: numbers[11],
            ozone: numbers[12],
            nitrogen_dioxide: numbers[13],
            sulphur_dioxide: numbers[14],
            pm2_5: numbers[15],
            pm10: numbers[16],
            aqi,
        };
        let key = (record.country.clone(), record.date);
        match seen.get(&key) {
            Some(&(kept_ts, slot)) => {
                report.duplicate_date_collapsed_count += 1;
                report.warn("duplicate_date_collapsed".into());
                if timestamp >= kept_ts {
                    records[slot] = record;
                    seen.insert(key, (timestamp, slot));
                }
            }
            None => {
                seen.insert(key, (timestamp, records.len()));
                records.push(record);
            }
        }
    }

    report.kept_rows = records.len();
    Ok((records, report))
}

/// Required numeric columns in validation order (everything except country,
/// timestamp, and the compass text).
const NUMERIC_COLUMNS: [&str; 18] = [
    "temperature_celsius",
    "wind_mph",
    "wind_degree",
    "pressure_mb",
    "precip_mm",
    "humidity",
    "cloud",
    "feels_like_celsius",
    "visibility_km",
    "uv_index",
    "gust_mph",
    "air_quality_Carbon_Monoxide",
    "air_quality_Ozone",
    "air_quality_Nitrogen_dioxide",
    "air_quality_Sulphur_dioxide",
    "air_quality_PM2.5",
    "air_quality_PM10",
    "air_quality_gb-defra-index",
];

fn numeric_in_range(name: &str, value: f64) -> bool {
    match name {
        "humidity" | "cloud" => (0.0..=100.0).contains(&value),
        "wind_degree" => (0.0..=360.0).contains(&value),
        "uv_index" => value >= 0.0,
        _ => true,
    }
}

/// Accepts `YYYY-MM-DD HH:MM[:SS]`, the `T`-separated variants, and a bare
/// date (read as midnight).
fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    let text = text.trim();
    const FORMATS: [&str; 4] = [
        "%Y-%m-%d %H:%M",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%dT%H:%M:%S",
    ];
    for format in FORMATS {
        if let Ok(ts) = NaiveDateTime::parse_from_str(text, format) {
            return Some(ts);
        }
    }
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .ok()
        .map(|d| d.and_time(NaiveTime::MIN))
}

/// Groups cleaned records into per-country series, countries in lexicographic
/// order and each series sorted by date.
pub fn group_by_country(records: Vec<CleanRecord>) -> Vec<CountrySeries> {
    let mut by_country: BTreeMap<String, Vec<CleanRecord>> = BTreeMap::new();
    for record in records {
        by_country
            .entry(record.country.clone())
            .or_default()
            .push(record);
    }
    by_country
        .into_iter()
        .map(|(country, mut records)| {
            records.sort_by_key(|r| r.date);
            debug_assert!(
                records.windows(2).all(|w| w[0].date < w[1].date),
                "duplicate dates must be collapsed before grouping"
            );
            CountrySeries { country, records }
        })
        .collect()
}

/// Renders cleaned records back to CSV text using the same header names the
/// cleaner consumes, so the output can be re-ingested. Dates are written to
/// `last_updated` and the compass code to `wind_direction`.
pub fn to_clean_csv(records: &[CleanRecord]) -> String {
    let mut out = String::from("country,last_updated");
    for name in FEATURE_NAMES {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for r in records {
        // Country names in this corpus never need quoting, but guard anyway.
        if r.country.contains([',', '"', '\n']) {
            let escaped = r.country.replace('"', "\"\"");
            let _ = write!(out, "\"{escaped}\"");
        } else {
            out.push_str(&r.country);
        }
        let _ = write!(out, ",{}", r.date.format("%Y-%m-%d"));
        for value in r.features() {
            // Display for f64 is shortest round-trip, so the text re-parses
            // to the identical bits.
            let _ = write!(out, ",{value}");
        }
        out.push('\n');
    }
    out
}
