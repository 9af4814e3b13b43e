//! Logged-data ingestion and replay.
//!
//! `items.csv`: a header, then `item_id, p_1..p_d2, revenue` per row.
//! `interactions.csv`: a header, then `q_1..q_d1, offered, chosen` per row,
//! where `offered` is a `;`-separated list of item ids and `chosen` is an
//! offered id or empty for no purchase.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ReplayConfig;
use crate::choice::{Assortment, Choice, ChoiceObservation, ItemCatalog, UserContext};
use crate::error::{Error, Result};
use crate::likelihood::ObservationSet;
use crate::lowrank::{default_rank_grid, select_rank_gic, GicScore};
use crate::policy::uniform_assortment;
use crate::sim::{replicate, Aggregate, EnvironmentSpec, Environment, Experiment, GroundTruth, UserSampler};

/// Catalog with the external item ids, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemTable {
    pub ids: Vec<String>,
    pub catalog: ItemCatalog,
}

impl ItemTable {
    fn index(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }
}

fn parse_error(source: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source.to_string(),
        line,
        message: message.into(),
    }
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn record_line(record: &csv::StringRecord, fallback: u64) -> u64 {
    record.position().map_or(fallback, |p| p.line())
}

fn map_csv_error(source: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    parse_error(source, line, e.to_string())
}

fn parse_number(source: &str, line: u64, column: &str, text: &str) -> Result<f64> {
    let x: f64 = text
        .parse()
        .map_err(|_| parse_error(source, line, format!("column `{column}`: `{text}` is not a number")))?;
    if !x.is_finite() {
        return Err(parse_error(source, line, format!("column `{column}`: value is not finite")));
    }
    Ok(x)
}

pub fn parse_items<R: Read>(input: R, source: &str) -> Result<ItemTable> {
    let mut reader = csv_reader(input);
    let header = reader.headers().map_err(|e| map_csv_error(source, e))?.clone();
    if header.len() < 3 {
        return Err(parse_error(
            source,
            1,
            "header needs item_id, at least one feature column and revenue",
        ));
    }
    let d2 = header.len() - 2;
    let mut ids = Vec::new();
    let mut seen = HashMap::new();
    let mut features = Vec::new();
    let mut revenues = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| map_csv_error(source, e))?;
        let line = record_line(&record, k as u64 + 2);
        if record.len() != header.len() {
            return Err(parse_error(
                source,
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(parse_error(source, line, "empty item_id"));
        }
        if id.contains(';') {
            return Err(parse_error(source, line, "item_id must not contain `;`"));
        }
        if let Some(first) = seen.insert(id.clone(), line) {
            return Err(parse_error(source, line, format!("item_id `{id}` already defined on line {first}")));
        }
        for j in 0..d2 {
            features.push(parse_number(source, line, &header[j + 1], &record[j + 1])?);
        }
        let revenue = parse_number(source, line, &header[d2 + 1], &record[d2 + 1])?;
        if revenue < 0.0 {
            return Err(parse_error(source, line, "revenue must be nonnegative"));
        }
        revenues.push(revenue);
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(parse_error(source, 1, "no items"));
    }
    let catalog = ItemCatalog::new(
        DMatrix::from_row_slice(ids.len(), d2, &features),
        DVector::from_vec(revenues),
    )?;
    Ok(ItemTable { ids, catalog })
}

pub fn parse_interactions<R: Read>(input: R, source: &str, items: &ItemTable) -> Result<Vec<ChoiceObservation>> {
    let mut reader = csv_reader(input);
    let header = reader.headers().map_err(|e| map_csv_error(source, e))?.clone();
    if header.len() < 3 {
        return Err(parse_error(
            source,
            1,
            "header needs at least one user feature column, offered and chosen",
        ));
    }
    let d1 = header.len() - 2;
    let index = items.index();
    let n_items = items.ids.len();
    let mut out = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| map_csv_error(source, e))?;
        let line = record_line(&record, k as u64 + 2);
        if record.len() != header.len() {
            return Err(parse_error(
                source,
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let q = (0..d1)
            .map(|j| parse_number(source, line, &header[j], &record[j]))
            .collect::<Result<Vec<_>>>()?;
        let offered_text = &record[d1];
        if offered_text.is_empty() {
            return Err(parse_error(source, line, "offered set is empty"));
        }
        let mut offered = Vec::new();
        for id in offered_text.split(';').map(str::trim) {
            let &i = index
                .get(id)
                .ok_or_else(|| parse_error(source, line, format!("unknown item_id `{id}` in offered set")))?;
            if offered.contains(&i) {
                return Err(parse_error(source, line, format!("item_id `{id}` offered twice")));
            }
            offered.push(i);
        }
        let chosen_text = &record[d1 + 1];
        let chosen = if chosen_text.is_empty() {
            Choice::NoPurchase
        } else {
            match index.get(chosen_text) {
                Some(&i) if offered.contains(&i) => Choice::Item(i),
                _ => {
                    return Err(parse_error(
                        source,
                        line,
                        format!("chosen item `{chosen_text}` is not in the offered set"),
                    ))
                }
            }
        };
        let capacity = offered.len();
        let assortment = Assortment::new(offered, n_items, capacity)?;
        out.push(ChoiceObservation {
            user: UserContext::from(DVector::from_vec(q)),
            assortment,
            chosen,
        });
    }
    if out.is_empty() {
        return Err(parse_error(source, 1, "no interactions"));
    }
    Ok(out)
}

pub fn read_items_csv(path: &Path) -> Result<ItemTable> {
    parse_items(std::fs::File::open(path)?, &path.display().to_string())
}

pub fn read_interactions_csv(path: &Path, items: &ItemTable) -> Result<Vec<ChoiceObservation>> {
    parse_interactions(std::fs::File::open(path)?, &path.display().to_string(), items)
}

pub fn write_items_csv<W: Write>(items: &ItemTable, mut out: W) -> Result<()> {
    let d2 = items.catalog.dim();
    let mut header = vec!["item_id".to_string()];
    header.extend((1..=d2).map(|j| format!("p{j}")));
    header.push("revenue".into());
    writeln!(out, "{}", header.join(","))?;
    let f = items.catalog.features();
    for (i, id) in items.ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(f.row(i).iter().map(|x| x.to_string()));
        row.push(items.catalog.revenues()[i].to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_interactions_csv<W: Write>(ids: &[String], records: &[ChoiceObservation], mut out: W) -> Result<()> {
    let d1 = records.first().map_or(0, |r| r.user.dim());
    let mut header: Vec<String> = (1..=d1).map(|j| format!("q{j}")).collect();
    header.push("offered".into());
    header.push("chosen".into());
    writeln!(out, "{}", header.join(","))?;
    for r in records {
        let mut row: Vec<String> = r.user.q.iter().map(|x| x.to_string()).collect();
        row.push(
            r.assortment
                .items()
                .iter()
                .map(|&i| ids[i].as_str())
                .collect::<Vec<_>>()
                .join(";"),
        );
        row.push(match r.chosen {
            Choice::NoPurchase => String::new(),
            Choice::Item(i) => ids[i].clone(),
        });
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Item ids `item0, item1, …` for a synthetic catalog.
pub fn synthetic_ids(n_items: usize) -> Vec<String> {
    (0..n_items).map(|i| format!("item{i}")).collect()
}

/// `n` logged interactions with uniformly random size-`K` assortments.
pub fn simulate_logged_data(env: &Environment, n: usize, seed: u64) -> Result<Vec<ChoiceObservation>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_items = env.catalog().n_items();
    (1..=n)
        .map(|t| {
            let user = env.user(t);
            let s = uniform_assortment(&mut rng, n_items, env.capacity())?;
            let u = env.utilities(&user)?;
            let chosen = env.choose(t, &u, &s);
            Ok(ChoiceObservation {
                user,
                assortment: s,
                chosen,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub rank: usize,
    pub scores: Vec<GicScore>,
    /// The fitted truth used by the simulation.
    pub truth: GroundTruth,
    pub aggregate: Aggregate,
}

/// Builds the replay environment: GIC-selected rank-constrained fit as the
/// truth, users resampled from the log.
pub fn fit_replay_environment(
    items: &ItemTable,
    records: &[ChoiceObservation],
    config: &ReplayConfig,
) -> Result<(EnvironmentSpec, usize, Vec<GicScore>)> {
    let data = ObservationSet::new(&items.catalog, records)?;
    let d1 = data.user_dim().ok_or(Error::EmptyData)?;
    let grid = config
        .rank_grid
        .clone()
        .unwrap_or_else(|| default_rank_grid(d1, items.catalog.dim()));
    let selection = select_rank_gic(&data, &grid, &config.fgd, &config.solver)?;
    let mut truth = GroundTruth::from_matrix(selection.phi_hat);
    truth.rank = selection.rank;
    let capacity = config
        .capacity
        .unwrap_or_else(|| records.iter().map(|r| r.assortment.len()).max().unwrap_or(1));
    if capacity > items.catalog.n_items() {
        return Err(Error::Config(format!(
            "capacity {capacity} exceeds the {} items in the catalog",
            items.catalog.n_items()
        )));
    }
    let env = EnvironmentSpec::Fixed {
        truth,
        catalog: items.catalog.clone(),
        users: UserSampler::Empirical {
            users: records.iter().map(|r| r.user.q.clone()).collect(),
        },
        capacity,
    };
    Ok((env, selection.rank, selection.scores))
}

pub fn replay_from_dataset(config: &ReplayConfig) -> Result<ReplayOutcome> {
    config.validate()?;
    let items = read_items_csv(&config.items_csv)?;
    let records = read_interactions_csv(&config.interactions_csv, &items)?;
    let (environment, rank, scores) = fit_replay_environment(&items, &records, config)?;
    let truth = match &environment {
        EnvironmentSpec::Fixed { truth, .. } => truth.clone(),
        EnvironmentSpec::Synthetic { .. } => unreachable!("replay builds a fixed environment"),
    };
    let experiment = Experiment {
        environment,
        policies: config.policies.clone(),
        horizon: config.horizon,
        checkpoints: config.checkpoints(),
    };
    let aggregate = replicate(&experiment, &config.seeds())?;
    Ok(ReplayOutcome {
        rank,
        scores,
        truth,
        aggregate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;
    use crate::sim::generate_instance;
    use rand::Rng;

    fn table(n: usize, d2: usize, seed: u64) -> ItemTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ItemTable {
            ids: synthetic_ids(n),
            catalog: ItemCatalog::with_unit_revenues(gaussian_matrix(n, d2, &mut rng)).unwrap(),
        }
    }

    #[test]
    fn chosen_outside_offered_set_reports_line() {
        let items = table(4, 2, 1);
        let text = "q1,q2,offered,chosen\n0.1,0.2,item0;item1,item1\n0.3,0.4,item2,\n1,2,item0;item3,item2\n";
        let err = parse_interactions(text.as_bytes(), "log.csv", &items).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 4);
                assert!(message.contains("item2"), "{message}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn malformed_rows_report_line() {
        let items = table(3, 2, 2);
        let cases = [
            ("q1,offered,chosen\n1.0,item0,\nx,item1,\n", 3),
            ("q1,offered,chosen\n1.0,item0,\n2.0,item9,\n", 3),
            ("q1,offered,chosen\n1.0,item0\n", 2),
            ("q1,offered,chosen\n1.0,,\n", 2),
            ("q1,offered,chosen\n1.0,item0;item0,\n", 2),
            ("q1,offered,chosen\n1.0,item0,\n1.0,item1,\n1.0,item2,inf\n", 4),
        ];
        for (text, want) in cases {
            match parse_interactions(text.as_bytes(), "log.csv", &items) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
        let bad_items = [
            ("item_id,p1,revenue\na,1.0,1.0\na,2.0,1.0\n", 3),
            ("item_id,p1,revenue\na,1.0,-1.0\n", 2),
            ("item_id,p1,revenue\na,nan,1.0\n", 2),
            ("item_id,p1,revenue\n,1.0,1.0\n", 2),
        ];
        for (text, want) in bad_items {
            match parse_items(text.as_bytes(), "items.csv") {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn generated_files_always_parse_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..1000 {
            let n_items = rng.random_range(1..8);
            let d1 = rng.random_range(1..5);
            let d2 = rng.random_range(1..5);
            let scale = 10f64.powi(rng.random_range(-3..4));
            let features = gaussian_matrix(n_items, d2, &mut rng) * scale;
            let revenues = DVector::from_fn(n_items, |_, _| rng.random_range(0.0..3.0));
            let items = ItemTable {
                ids: (0..n_items).map(|i| format!("id-{case}-{i}")).collect(),
                catalog: ItemCatalog::new(features, revenues).unwrap(),
            };
            let n = rng.random_range(1..20);
            let records: Vec<ChoiceObservation> = (0..n)
                .map(|_| {
                    let k = rng.random_range(1..=n_items);
                    let s = uniform_assortment(&mut rng, n_items, k).unwrap();
                    let pick = rng.random_range(0..=s.len());
                    ChoiceObservation {
                        user: UserContext::from(gaussian_matrix(d1, 1, &mut rng).column(0).into_owned() * scale),
                        chosen: Choice::from_index(&s, pick),
                        assortment: s,
                    }
                })
                .collect();
            let mut items_buf = Vec::new();
            write_items_csv(&items, &mut items_buf).unwrap();
            let mut log_buf = Vec::new();
            write_interactions_csv(&items.ids, &records, &mut log_buf).unwrap();
            let items_back = parse_items(items_buf.as_slice(), "items").unwrap();
            assert_eq!(items_back, items);
            let back = parse_interactions(log_buf.as_slice(), "log", &items_back).unwrap();
            assert_eq!(back.len(), records.len());
            for (a, b) in back.iter().zip(&records) {
                assert_eq!(a.user, b.user);
                assert_eq!(a.assortment.items(), b.assortment.items());
                assert_eq!(a.chosen, b.chosen);
            }
        }
    }

    #[test]
    fn synthetic_export_round_trips_through_files() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (truth, catalog) = generate_instance(4, 3, 6, 1, 3.0, &mut rng).unwrap();
        let env = Environment::new(truth, catalog.clone(), UserSampler::Gaussian { dim: 4 }, 2, 11).unwrap();
        let records = simulate_logged_data(&env, 50, 5).unwrap();
        let items = ItemTable {
            ids: synthetic_ids(6),
            catalog,
        };
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("items.csv");
        let lp = dir.path().join("interactions.csv");
        write_items_csv(&items, std::fs::File::create(&ip).unwrap()).unwrap();
        write_interactions_csv(&items.ids, &records, std::fs::File::create(&lp).unwrap()).unwrap();
        let items_back = read_items_csv(&ip).unwrap();
        let back = read_interactions_csv(&lp, &items_back).unwrap();
        assert_eq!(items_back, items);
        assert_eq!(back.len(), 50);
        assert!(back.iter().zip(&records).all(|(a, b)| a.chosen == b.chosen && a.user == b.user));
    }
}
