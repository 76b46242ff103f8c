//! CSV ingestion and export for match events, 1X2 odds and over/under odds.
//!
//! Malformed values abort with a parse error carrying the file and line.
//! Empty required fields only exclude the affected match, with a warning.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use csv::StringRecord;
use serde::{Deserialize, Serialize};

use crate::domain::{Half, MarketSnapshot, MatchEvent, MatchTimeline, OddsTriple, OverUnderOdds, TeamId};
use crate::error::{Error, Result};

const EVENT_COLUMNS: [&str; 11] =
    ["match_id", "date", "home", "away", "minute", "half", "kind", "team", "psxg", "first_half_end", "full_time"];
const ODDS_COLUMNS: [&str; 5] = ["match_id", "minute", "odds_home", "odds_draw", "odds_away"];
const OU_COLUMNS: [&str; 4] = ["match_id", "threshold", "odds_over", "odds_under"];

/// Validated matches and their markets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Sorted by `(date, match_id)`.
    pub timelines: Vec<MatchTimeline>,
    pub markets: BTreeMap<String, MarketSnapshot>,
    /// Matches dropped during ingestion.
    pub excluded: Vec<String>,
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn timeline(&self, match_id: &str) -> Option<&MatchTimeline> {
        self.timelines.iter().find(|t| t.match_id == match_id)
    }

    /// Why a match cannot be evaluated against its market, if it cannot:
    /// evaluation needs kickoff over/under prices and a 1X2 price at every
    /// minute `0..=floor(full_time) + lag`.
    pub fn coverage_gap(&self, tl: &MatchTimeline, lag: i64) -> Option<String> {
        let Some(m) = self.markets.get(&tl.match_id) else {
            return Some("no market data".into());
        };
        if let Err(e) = m.over_probabilities() {
            return Some(e.to_string());
        }
        let last = tl.full_time.floor() as i64 + lag;
        (0..=last).find(|k| !m.one_x_two.contains_key(k)).map(|k| format!("no 1X2 price at minute {k}"))
    }
}

fn parse_err(file: &str, row: usize, message: impl Into<String>) -> Error {
    Error::Parse { file: file.to_string(), row, message: message.into() }
}

struct Columns {
    file: String,
    index: HashMap<String, usize>,
}

impl Columns {
    fn new(file: &str, headers: &StringRecord, required: &[&str]) -> Result<Self> {
        let index: HashMap<String, usize> =
            headers.iter().enumerate().map(|(i, h)| (h.trim().to_string(), i)).collect();
        for c in required {
            if !index.contains_key(*c) {
                return Err(parse_err(file, 1, format!("missing column '{c}'")));
            }
        }
        Ok(Columns { file: file.to_string(), index })
    }

    /// Trimmed field, `None` when the column is absent or the cell is empty.
    fn get<'a>(&self, rec: &'a StringRecord, name: &str) -> Option<&'a str> {
        let i = *self.index.get(name)?;
        rec.get(i).map(str::trim).filter(|s| !s.is_empty())
    }

    fn number(&self, rec: &StringRecord, row: usize, name: &str) -> Result<Option<f64>> {
        match self.get(rec, name) {
            None => Ok(None),
            Some(s) => s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| parse_err(&self.file, row, format!("{name}: '{s}' is not a number"))),
        }
    }

    fn integer(&self, rec: &StringRecord, row: usize, name: &str) -> Result<Option<i64>> {
        match self.number(rec, row, name)? {
            Some(v) if v.fract() == 0.0 => Ok(Some(v as i64)),
            Some(v) => Err(parse_err(&self.file, row, format!("{name}: {v} is not a whole number"))),
            None => Ok(None),
        }
    }
}

fn line_of(rec: &StringRecord, fallback: usize) -> usize {
    rec.position().map_or(fallback, |p| p.line() as usize)
}

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(r)
}

struct MatchHeader {
    date: NaiveDate,
    home: String,
    away: String,
    first_half_end: f64,
    full_time: f64,
    gameweek: Option<String>,
}

#[derive(Default)]
struct MatchRows {
    header: Option<MatchHeader>,
    events: Vec<MatchEvent>,
    problems: Vec<String>,
}

/// Parses an events file. Matches appear in first-seen order before sorting.
pub fn read_events<R: Read>(source: R, file: &str) -> Result<(Vec<MatchTimeline>, Vec<String>, Vec<String>)> {
    let mut rdr = reader(source);
    let headers = rdr.headers().map_err(|e| parse_err(file, 1, e.to_string()))?.clone();
    let mut warnings = Vec::new();
    if headers.is_empty() {
        warnings.push(format!("{file}: empty events file"));
        return Ok((Vec::new(), Vec::new(), warnings));
    }
    let cols = Columns::new(file, &headers, &EVENT_COLUMNS)?;
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, MatchRows> = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(file, i + 2, e.to_string()))?;
        let row = line_of(&rec, i + 2);
        let id = cols.get(&rec, "match_id").ok_or_else(|| parse_err(file, row, "match_id is empty"))?.to_string();
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            MatchRows::default()
        });
        parse_event_row(&cols, &rec, row, entry)?;
    }
    if order.is_empty() {
        warnings.push(format!("{file}: no event rows"));
    }

    let mut timelines = Vec::new();
    let mut excluded = Vec::new();
    for id in order {
        let m = rows.remove(&id).expect("recorded match");
        if !m.problems.is_empty() {
            warnings.push(format!("match {id} excluded: {}", m.problems.join("; ")));
            excluded.push(id);
            continue;
        }
        let h = m.header.expect("header recorded with every complete row");
        let built = TeamId::new(h.home.as_str())
            .and_then(|home| TeamId::new(h.away.as_str()).map(|away| (home, away)))
            .and_then(|(home, away)| {
                MatchTimeline::from_events(id.as_str(), h.date, home, away, m.events, h.first_half_end, h.full_time)
            });
        match built {
            Ok(tl) => timelines.push(match h.gameweek {
                Some(g) => tl.with_gameweek(g),
                None => tl,
            }),
            Err(e) => {
                warnings.push(format!("match {id} excluded: {e}"));
                excluded.push(id);
            }
        }
    }
    timelines.sort_by(|a, b| (a.date, &a.match_id).cmp(&(b.date, &b.match_id)));
    Ok((timelines, excluded, warnings))
}

fn parse_event_row(cols: &Columns, rec: &StringRecord, row: usize, entry: &mut MatchRows) -> Result<()> {
    let file = cols.file.as_str();
    let mut missing = Vec::new();
    let mut text = |name: &str| match cols.get(rec, name) {
        Some(s) => Some(s.to_string()),
        None => {
            missing.push(name.to_string());
            None
        }
    };
    let (date, home, away) = (text("date"), text("home"), text("away"));
    let date = match date {
        Some(s) => Some(
            NaiveDate::parse_from_str(&s, "%Y-%m-%d")
                .map_err(|_| parse_err(file, row, format!("date: '{s}' is not YYYY-MM-DD")))?,
        ),
        None => None,
    };
    let fhe = cols.number(rec, row, "first_half_end")?;
    let ft = cols.number(rec, row, "full_time")?;
    if fhe.is_none() {
        missing.push("first_half_end".into());
    }
    if ft.is_none() {
        missing.push("full_time".into());
    }
    let gameweek = cols.get(rec, "gameweek").map(str::to_string);

    if let (Some(date), Some(home), Some(away), Some(fhe), Some(ft)) = (date, home, away, fhe, ft) {
        match &entry.header {
            None => entry.header = Some(MatchHeader { date, home, away, first_half_end: fhe, full_time: ft, gameweek }),
            Some(h) => {
                if h.date != date || h.home != home || h.away != away || h.first_half_end != fhe || h.full_time != ft {
                    return Err(parse_err(file, row, "match fields disagree with an earlier row of the same match"));
                }
                if gameweek.is_some() && h.gameweek != gameweek {
                    return Err(parse_err(file, row, "gameweek disagrees with an earlier row of the same match"));
                }
            }
        }
    }

    let kind = cols.get(rec, "kind");
    let minute = cols.number(rec, row, "minute")?;
    let half = cols.integer(rec, row, "half")?;
    let team = cols.get(rec, "team");
    let psxg = cols.number(rec, row, "psxg")?;
    match kind {
        // fixture-only row: a match with no recorded events
        None if minute.is_none() && half.is_none() && team.is_none() => {}
        None => missing.push("kind".into()),
        Some(k) => {
            let half = match half {
                Some(h) => Some(
                    u8::try_from(h)
                        .ok()
                        .and_then(|h| Half::try_from(h).ok())
                        .ok_or_else(|| parse_err(file, row, format!("half: {h} is not 1 or 2")))?,
                ),
                None => {
                    missing.push("half".into());
                    None
                }
            };
            if minute.is_none() {
                missing.push("minute".into());
            }
            let team = match team.map(TeamId::new).transpose() {
                Ok(t) => t,
                Err(e) => return Err(parse_err(file, row, e.to_string())),
            };
            if team.is_none() {
                missing.push("team".into());
            }
            let kind = match k.to_ascii_lowercase().as_str() {
                "goal" => 0,
                "red" => 1,
                "shot" => 2,
                other => return Err(parse_err(file, row, format!("kind: '{other}' is not goal, red or shot"))),
            };
            if kind == 2 && psxg.is_none() {
                missing.push("psxg".into());
            }
            if let (Some(minute), Some(half), Some(team)) = (minute, half, team) {
                entry.events.push(match kind {
                    0 => MatchEvent::goal(half, minute, team),
                    1 => MatchEvent::red_card(half, minute, team),
                    _ => MatchEvent::shot(half, minute, team, psxg.unwrap_or_default()),
                });
            }
        }
    }
    if !missing.is_empty() {
        entry.problems.push(format!("line {row}: missing {}", missing.join(", ")));
    }
    Ok(())
}

/// Markets by match id, ids with incomplete odds rows, and warnings.
pub type OddsTable = (BTreeMap<String, MarketSnapshot>, BTreeSet<String>, Vec<String>);

/// Parses 1X2 odds. Returns markets plus ids whose odds rows were incomplete.
pub fn read_odds<R: Read>(source: R, file: &str) -> Result<OddsTable> {
    let mut rdr = reader(source);
    let headers = rdr.headers().map_err(|e| parse_err(file, 1, e.to_string()))?.clone();
    let mut markets: BTreeMap<String, MarketSnapshot> = BTreeMap::new();
    let mut incomplete = BTreeSet::new();
    let mut warnings = Vec::new();
    if headers.is_empty() {
        warnings.push(format!("{file}: empty odds file"));
        return Ok((markets, incomplete, warnings));
    }
    let cols = Columns::new(file, &headers, &ODDS_COLUMNS)?;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(file, i + 2, e.to_string()))?;
        let row = line_of(&rec, i + 2);
        let id = cols.get(&rec, "match_id").ok_or_else(|| parse_err(file, row, "match_id is empty"))?.to_string();
        let minute = cols.integer(&rec, row, "minute")?;
        let prices = [
            cols.number(&rec, row, "odds_home")?,
            cols.number(&rec, row, "odds_draw")?,
            cols.number(&rec, row, "odds_away")?,
        ];
        let (Some(minute), [Some(h), Some(d), Some(a)]) = (minute, prices) else {
            if incomplete.insert(id.clone()) {
                warnings.push(format!("{file}:{row}: incomplete odds row for match {id}"));
            }
            continue;
        };
        let odds = OddsTriple::new(h, d, a).map_err(|e| parse_err(file, row, e.to_string()))?;
        let market = markets.entry(id).or_default();
        if market.one_x_two.insert(minute, odds).is_some() {
            return Err(parse_err(file, row, format!("duplicate price at minute {minute}")));
        }
    }
    Ok((markets, incomplete, warnings))
}

/// Parses kickoff over/under odds into existing (or new) market entries.
pub fn read_over_under<R: Read>(
    source: R,
    file: &str,
    markets: &mut BTreeMap<String, MarketSnapshot>,
) -> Result<(BTreeSet<String>, Vec<String>)> {
    let mut rdr = reader(source);
    let headers = rdr.headers().map_err(|e| parse_err(file, 1, e.to_string()))?.clone();
    let mut incomplete = BTreeSet::new();
    let mut warnings = Vec::new();
    if headers.is_empty() {
        warnings.push(format!("{file}: empty over/under file"));
        return Ok((incomplete, warnings));
    }
    let cols = Columns::new(file, &headers, &OU_COLUMNS)?;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(file, i + 2, e.to_string()))?;
        let row = line_of(&rec, i + 2);
        let id = cols.get(&rec, "match_id").ok_or_else(|| parse_err(file, row, "match_id is empty"))?.to_string();
        let vals = [
            cols.number(&rec, row, "threshold")?,
            cols.number(&rec, row, "odds_over")?,
            cols.number(&rec, row, "odds_under")?,
        ];
        let [Some(g), Some(o), Some(u)] = vals else {
            if incomplete.insert(id.clone()) {
                warnings.push(format!("{file}:{row}: incomplete over/under row for match {id}"));
            }
            continue;
        };
        let q = OverUnderOdds::new(g, o, u).map_err(|e| parse_err(file, row, e.to_string()))?;
        let market = markets.entry(id).or_default();
        if market.over_under.iter().any(|x| (x.threshold - g).abs() < 1e-9) {
            return Err(parse_err(file, row, format!("duplicate over/under threshold {g}")));
        }
        market.over_under.push(q);
    }
    for m in markets.values_mut() {
        m.over_under.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
    }
    Ok((incomplete, warnings))
}

/// Reads the three input files into a validated dataset.
pub fn ingest(events: &Path, odds: &Path, over_under: &Path) -> Result<Dataset> {
    let (timelines, mut excluded, mut warnings) = read_events(open(events)?, &file_label(events))?;
    let (mut markets, mut incomplete, w) = read_odds(open(odds)?, &file_label(odds))?;
    warnings.extend(w);
    let (inc, w) = read_over_under(open(over_under)?, &file_label(over_under), &mut markets)?;
    warnings.extend(w);
    incomplete.extend(inc);
    assemble(timelines, markets, incomplete, &mut excluded, &mut warnings).map(|(timelines, markets)| Dataset {
        timelines,
        markets,
        excluded,
        warnings,
    })
}

type Assembled = (Vec<MatchTimeline>, BTreeMap<String, MarketSnapshot>);

fn assemble(
    timelines: Vec<MatchTimeline>,
    mut markets: BTreeMap<String, MarketSnapshot>,
    incomplete: BTreeSet<String>,
    excluded: &mut Vec<String>,
    warnings: &mut Vec<String>,
) -> Result<Assembled> {
    let known: BTreeSet<&str> = timelines.iter().map(|t| t.match_id.as_str()).collect();
    let orphans: Vec<String> = markets.keys().filter(|k| !known.contains(k.as_str())).cloned().collect();
    for id in orphans {
        if !excluded.contains(&id) {
            warnings.push(format!("odds for unknown match {id} ignored"));
        }
        markets.remove(&id);
    }
    let mut kept = Vec::with_capacity(timelines.len());
    for tl in timelines {
        if incomplete.contains(&tl.match_id) {
            warnings.push(format!("match {} excluded: incomplete market rows", tl.match_id));
            markets.remove(&tl.match_id);
            excluded.push(tl.match_id.clone());
        } else {
            kept.push(tl);
        }
    }
    Ok((kept, markets))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

/// Writes timelines in the events schema. Matches without events get one
/// fixture-only row so they survive a round trip.
pub fn write_events<W: Write>(out: W, timelines: &[MatchTimeline]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = EVENT_COLUMNS.to_vec();
    header.push("gameweek");
    w.write_record(&header).map_err(csv_err)?;
    for tl in timelines {
        let base = |minute: String, half: String, kind: &str, team: String, psxg: String| {
            vec![
                tl.match_id.clone(),
                tl.date.format("%Y-%m-%d").to_string(),
                tl.home.to_string(),
                tl.away.to_string(),
                minute,
                half,
                kind.to_string(),
                team,
                psxg,
                fmt_f(tl.first_half_end),
                fmt_f(tl.full_time),
                tl.gameweek.clone().unwrap_or_default(),
            ]
        };
        if tl.events.is_empty() {
            w.write_record(base(String::new(), String::new(), "", String::new(), String::new())).map_err(csv_err)?;
        }
        for ev in &tl.events {
            let kind = match ev.kind {
                crate::domain::EventKind::Goal => "goal",
                crate::domain::EventKind::RedCard => "red",
                crate::domain::EventKind::Shot => "shot",
            };
            let psxg = ev.psxg.map(fmt_f).unwrap_or_default();
            let rec = base(fmt_f(ev.minute), ev.half.number().to_string(), kind, ev.team.to_string(), psxg);
            w.write_record(rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_odds<W: Write>(out: W, markets: &BTreeMap<String, MarketSnapshot>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ODDS_COLUMNS).map_err(csv_err)?;
    for (id, m) in markets {
        for (minute, o) in &m.one_x_two {
            w.write_record([id.clone(), minute.to_string(), fmt_f(o.home), fmt_f(o.draw), fmt_f(o.away)])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_over_under<W: Write>(out: W, markets: &BTreeMap<String, MarketSnapshot>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(OU_COLUMNS).map_err(csv_err)?;
    for (id, m) in markets {
        for q in &m.over_under {
            w.write_record([id.clone(), fmt_f(q.threshold), fmt_f(q.over), fmt_f(q.under)]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes all three files into `dir` as `events.csv`, `odds.csv`, `ou.csv`.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<[std::path::PathBuf; 3]> {
    std::fs::create_dir_all(dir)?;
    let paths = [dir.join("events.csv"), dir.join("odds.csv"), dir.join("ou.csv")];
    write_events(std::fs::File::create(&paths[0])?, &dataset.timelines)?;
    write_odds(std::fs::File::create(&paths[1])?, &dataset.markets)?;
    write_over_under(std::fs::File::create(&paths[2])?, &dataset.markets)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::EventKind;

    const HEAD: &str = "match_id,date,home,away,minute,half,kind,team,psxg,first_half_end,full_time\n";

    fn events(body: &str) -> Result<(Vec<MatchTimeline>, Vec<String>, Vec<String>)> {
        read_events(format!("{HEAD}{body}").as_bytes(), "events.csv")
    }

    #[test]
    fn empty_file_gives_empty_dataset() {
        let (t, ex, w) = read_events("".as_bytes(), "events.csv").unwrap();
        assert!(t.is_empty() && ex.is_empty());
        assert_eq!(w.len(), 1);
        let (t, _, w) = events("").unwrap();
        assert!(t.is_empty());
        assert!(!w.is_empty());
    }

    #[test]
    fn second_half_goal_maps_to_away_team() {
        let (t, _, _) = events("m1,2024-01-06,Ajax,PSV,47.2,2,goal,PSV,,46,93\n").unwrap();
        let ev = &t[0].events[0];
        assert_eq!((ev.kind, ev.half, ev.minute), (EventKind::Goal, Half::Second, 47.2));
        assert_eq!(ev.team.as_str(), "PSV");
        assert_eq!(t[0].final_score, (0, 1));
    }

    #[test]
    fn fixture_row_and_gameweek() {
        let body = "match_id,date,home,away,minute,half,kind,team,psxg,first_half_end,full_time,gameweek\n\
                    m1,2024-01-06,A,B,,,,,,46,94,7\n";
        let (t, _, _) = read_events(body.as_bytes(), "e").unwrap();
        assert!(t[0].events.is_empty());
        assert_eq!(t[0].gameweek.as_deref(), Some("7"));
    }

    #[test]
    fn missing_field_excludes_match() {
        let (t, ex, w) = events(
            "m1,2024-01-06,A,B,10,1,shot,A,,46,94\n\
             m2,2024-01-07,A,B,12,1,goal,B,,46,94\n",
        )
        .unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(ex, vec!["m1".to_string()]);
        assert!(w[0].contains("psxg"));
    }

    #[test]
    fn malformed_value_reports_line() {
        match events("m1,2024-01-06,A,B,10,1,goal,A,,46,94\nm1,2024-01-06,A,B,abc,1,goal,A,,46,94\n").unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 3),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(events("m1,06/01/2024,A,B,10,1,goal,A,,46,94\n"), Err(Error::Parse { row: 2, .. })));
        assert!(matches!(events("m1,2024-01-06,A,B,10,3,goal,A,,46,94\n"), Err(Error::Parse { .. })));
        assert!(matches!(events("m1,2024-01-06,A,B,10,1,corner,A,,46,94\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn invalid_match_is_excluded() {
        let (t, ex, _) = events("m1,2024-01-06,A,B,10,1,goal,C,,46,94\n").unwrap();
        assert!(t.is_empty());
        assert_eq!(ex, vec!["m1".to_string()]);
    }

    #[test]
    fn odds_below_one_rejected() {
        let body = "match_id,minute,odds_home,odds_draw,odds_away\nm1,0,0.99,3.5,4.0\n";
        assert!(matches!(read_odds(body.as_bytes(), "odds.csv"), Err(Error::Parse { row: 2, .. })));
        let ok = "match_id,minute,odds_home,odds_draw,odds_away\nm1,0,2.0,3.5,4.0\nm1,1,,3.5,4.0\n";
        let (m, inc, _) = read_odds(ok.as_bytes(), "odds.csv").unwrap();
        assert_eq!(m["m1"].one_x_two.len(), 1);
        assert!(inc.contains("m1"));
    }

    #[test]
    fn round_trip_through_writers() {
        let (t, _, _) = events(
            "m1,2024-01-06,A,B,10.5,1,shot,A,0.31,46,94\n\
             m1,2024-01-06,A,B,11,1,goal,A,,46,94\n\
             m1,2024-01-06,A,B,60,2,red,B,,46,94\n\
             m2,2024-01-13,B,A,,,,,,47,95\n",
        )
        .unwrap();
        let mut buf = Vec::new();
        write_events(&mut buf, &t).unwrap();
        let (back, _, _) = read_events(buf.as_slice(), "e").unwrap();
        assert_eq!(back, t);

        let mut markets = BTreeMap::new();
        let mut m = MarketSnapshot::default();
        m.insert_price(0, OddsTriple::new(2.0, 3.4, 4.1).unwrap()).unwrap();
        m.over_under.push(OverUnderOdds::new(2.5, 1.9, 2.05).unwrap());
        markets.insert("m1".to_string(), m);
        let (mut o, mut q) = (Vec::new(), Vec::new());
        write_odds(&mut o, &markets).unwrap();
        write_over_under(&mut q, &markets).unwrap();
        let (mut back, _, _) = read_odds(o.as_slice(), "o").unwrap();
        read_over_under(q.as_slice(), "q", &mut back).unwrap();
        assert_eq!(back, markets);
    }
}
