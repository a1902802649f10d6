//! Deterministic synthetic weather tables in the ingestion schema.
//!
//! The generator produces a corpus with the statistical shape the pipeline
//! expects from real exports: per-country AR(1) pollution series driving a
//! banded air-quality index, correlated particulate and gas readings, an
//! ozone level that moves against pollution, plus configurable date gaps,
//! same-day duplicate updates, and corrupt cells to exercise cleaning.
//! Identical options always render the identical CSV text.

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ingest::{self, CleanRecord, CountrySeries, SchemaReport, FEATURE_NAMES};

/// Knobs for [`weather_csv`]. Rates are per generated row (or per day for
/// `gap_rate`).
#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub countries: usize,
    pub days: usize,
    pub start: NaiveDate,
    pub seed: u64,
    /// Chance a row gets one corrupt cell (dropped by cleaning).
    pub bad_cell_rate: f64,
    /// Chance a day gets a second, later update (collapsed by cleaning).
    pub duplicate_rate: f64,
    /// Chance a country simply skips a day (creates lag gaps).
    pub gap_rate: f64,
    /// Chance a row reports the out-of-band index value 0.
    pub zero_index_rate: f64,
    /// Append columns the cleaner must ignore.
    pub extra_columns: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            countries: 20,
            days: 30,
            start: NaiveDate::from_ymd_opt(2024, 3, 1).unwrap(),
            seed: 7,
            bad_cell_rate: 0.01,
            duplicate_rate: 0.01,
            gap_rate: 0.01,
            zero_index_rate: 0.002,
            extra_columns: true,
        }
    }
}

/// DEFRA daily-index breakpoints for PM2.5 (µg/m³, 24h mean): the level is
/// the 1-based position of the first bound at or above the reading.
const PM25_BOUNDS: [f64; 9] = [11.0, 23.0, 35.0, 41.0, 47.0, 53.0, 58.0, 64.0, 70.0];

fn index_of_pm25(pm: f64) -> u8 {
    for (i, bound) in PM25_BOUNDS.iter().enumerate() {
        if pm <= *bound {
            return (i + 1) as u8;
        }
    }
    10
}

/// Renders a complete CSV table. Row order is country-major, day-minor, with
/// duplicate updates immediately after their day's first row.
pub fn weather_csv(opts: &SynthOptions) -> String {
    let mut out = String::new();
    out.push_str("country,last_updated");
    for name in FEATURE_NAMES {
        if name == "air_quality_gb-defra-index" {
            continue; // index is appended last, after the extras decision
        }
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",air_quality_gb-defra-index");
    if opts.extra_columns {
        out.push_str(",location_name,moon_phase");
    }
    out.push('\n');

    for c in 0..opts.countries {
        let country = country_name(c);
        let mut rng = country_rng(opts.seed, c as u64);
        let base_pm = (Normal::new(2.9_f64, 0.7).unwrap().sample(&mut rng).exp()).clamp(3.0, 120.0);
        let base_temp = rng.random_range(-5.0..32.0);
        let mut pm = base_pm;

        for day in 0..opts.days {
            let date = opts.start + Days::new(day as u64);
            // Day-to-day pollution follows AR(1) around the country's base.
            let shock = Normal::new(0.0, base_pm * 0.18).unwrap().sample(&mut rng);
            pm = (base_pm + 0.85 * (pm - base_pm) + shock).max(0.8);

            if rng.random_bool(opts.gap_rate) {
                continue;
            }
            let row = render_row(&country, date, "10:30", pm, base_temp, opts, &mut rng);
            out.push_str(&row);
            out.push('\n');

            if rng.random_bool(opts.duplicate_rate) {
                let dup = render_row(
                    &country,
                    date,
                    "21:45",
                    pm * 1.05,
                    base_temp,
                    opts,
                    &mut rng,
                );
                out.push_str(&dup);
                out.push('\n');
            }
        }
    }
    out
}

fn country_name(index: usize) -> String {
    format!("Country {index:03}")
}

fn country_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    // Golden-ratio stride keeps per-country streams well separated.
    ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn render_row(
    country: &str,
    date: NaiveDate,
    time: &str,
    pm: f64,
    base_temp: f64,
    opts: &SynthOptions,
    rng: &mut ChaCha8Rng,
) -> String {
    let normal = |rng: &mut ChaCha8Rng, std: f64| Normal::new(0.0, std).unwrap().sample(rng);

    let pm2_5 = round1(pm);
    let pm10 = round1(pm * rng.random_range(1.25..1.8));
    let co = round1((230.0 + pm * 12.0 + normal(rng, 30.0)).max(10.0));
    let ozone = round1((95.0 - 0.55 * pm + normal(rng, 8.0)).clamp(2.0, 160.0));
    let no2 = round1((5.0 + 0.6 * pm + normal(rng, 3.0)).max(0.1));
    let so2 = round1((2.0 + 0.25 * pm + normal(rng, 2.0)).max(0.05));
    let aqi = if rng.random_bool(opts.zero_index_rate) {
        0
    } else {
        index_of_pm25(pm2_5)
    };

    let temperature = round1(base_temp + normal(rng, 2.5));
    let feels_like = round1(temperature + normal(rng, 1.5));
    let wind = round1(rng.random_range(2.0..25.0));
    let gust = round1(wind * rng.random_range(1.2..1.7));
    let degree = rng.random_range(0..360) as f64;
    let direction = ingest::compass_label((((degree + 11.25) / 22.5) as u8) % 16).unwrap();
    let pressure = round1(1013.0 + normal(rng, 8.0));
    let precip = if rng.random_bool(0.7) {
        0.0
    } else {
        round1(rng.random_range(0.1..12.0))
    };
    let humidity = rng.random_range(20..=95);
    let cloud = rng.random_range(0..=100);
    let visibility = round1(rng.random_range(4.0..20.0));
    let uv = rng.random_range(0..=11);

    let mut cells = vec![
        country.to_string(),
        format!("{} {time}", date.format("%Y-%m-%d")),
        fmt(temperature),
        fmt(wind),
        fmt(degree),
        direction.to_string(),
        fmt(pressure),
        fmt(precip),
        humidity.to_string(),
        cloud.to_string(),
        fmt(feels_like),
        fmt(visibility),
        uv.to_string(),
        fmt(gust),
        fmt(co),
        fmt(ozone),
        fmt(no2),
        fmt(so2),
        fmt(pm2_5),
        fmt(pm10),
        aqi.to_string(),
    ];

    if rng.random_bool(opts.bad_cell_rate) {
        match rng.random_range(0..4) {
            0 => cells[8] = "120".into(),        // humidity out of range
            1 => cells[2] = "sensor_err".into(), // unparseable temperature
            2 => cells[1] = "not a date".into(),
            _ => cells[20] = "11".into(), // index above scale
        }
    }
    if opts.extra_columns {
        cells.push(format!("{country} City"));
        cells.push(fmt(round1(rng.random_range(0.0..1.0))));
    }
    cells.join(",")
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Generates, cleans, and groups a synthetic corpus in one step.
pub fn clean_series(opts: &SynthOptions) -> (Vec<CountrySeries>, SchemaReport) {
    let csv = weather_csv(opts);
    let raw = ingest::parse_csv_reader(csv.as_bytes(), "synthetic.csv")
        .expect("generator output is well-formed CSV");
    let (records, report) = ingest::clean(&raw).expect("generator emits every required column");
    (ingest::group_by_country(records), report)
}

/// One plausible cleaned record with the given index value; handy for
/// hand-built test series. All other fields derive deterministically from
/// `seed`, with pollutant levels consistent with the index.
pub fn clean_record(country: &str, date: NaiveDate, aqi: u8, seed: u64) -> CleanRecord {
    let mut rng = country_rng(seed, 0xFEED);
    // Rain draws come from their own stream: most days are dry, but the
    // column must not be constant or it degenerates every centered solve.
    let mut rain = country_rng(seed, 0xD121);
    let normal = |rng: &mut ChaCha8Rng, std: f64| Normal::new(0.0, std).unwrap().sample(rng);
    // Centre PM2.5 inside the band for this index level.
    let pm_centres = [
        3.0, 6.0, 17.0, 29.0, 38.0, 44.0, 50.0, 56.0, 61.0, 67.0, 80.0,
    ];
    let pm = (pm_centres[aqi as usize] + normal(&mut rng, 1.0)).max(0.5);
    let temperature = round1(15.0 + normal(&mut rng, 8.0));
    let wind = round1(rng.random_range(2.0..25.0));
    let degree = rng.random_range(0..360) as f64;

    CleanRecord {
        country: country.to_string(),
        date,
        temperature_celsius: temperature,
        wind_mph: wind,
        wind_degree: degree,
        wind_direction_code: (((degree + 11.25) / 22.5) as u8) % 16,
        pressure_mb: round1(1013.0 + normal(&mut rng, 8.0)),
        precip_mm: if rain.random_bool(0.7) {
            0.0
        } else {
            round1(rain.random_range(0.1..12.0))
        },
        humidity: rng.random_range(20..=95) as f64,
        cloud: rng.random_range(0..=100) as f64,
        feels_like_celsius: round1(temperature + normal(&mut rng, 1.5)),
        visibility_km: round1(rng.random_range(4.0..20.0)),
        uv_index: rng.random_range(0..=11) as f64,
        gust_mph: round1(wind * 1.4),
        carbon_monoxide: round1((230.0 + pm * 12.0 + normal(&mut rng, 30.0)).max(10.0)),
        ozone: round1((95.0 - 0.55 * pm + normal(&mut rng, 8.0)).clamp(2.0, 160.0)),
        nitrogen_dioxide: round1((5.0 + 0.6 * pm + normal(&mut rng, 3.0)).max(0.1)),
        sulphur_dioxide: round1((2.0 + 0.25 * pm + normal(&mut rng, 2.0)).max(0.05)),
        pm2_5: round1(pm),
        pm10: round1(pm * 1.5),
        aqi,
    }
}
