//! Feed-forward timing: whether the Pockels cell is armed before the channel
//! photon reaches it, and the per-trial event log.

use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::optics::DEFAULT_NS_PER_M;

/// HV driver risetime of the Pockels-cell switch.
pub const DEFAULT_RISETIME_NS: f64 = 22.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingModel {
    pub risetime_ns: f64,
    pub delay_ns_per_m: f64,
    pub detector_latency_ns: f64,
    pub jitter_sigma_ns: f64,
}

impl Default for TimingModel {
    fn default() -> Self {
        TimingModel {
            risetime_ns: DEFAULT_RISETIME_NS,
            delay_ns_per_m: DEFAULT_NS_PER_M,
            detector_latency_ns: 0.0,
            jitter_sigma_ns: 0.0,
        }
    }
}

impl TimingModel {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("risetime", self.risetime_ns),
            ("ns per metre", self.delay_ns_per_m),
            ("detector latency", self.detector_latency_ns),
            ("jitter sigma", self.jitter_sigma_ns),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} {v} must be finite and >= 0"));
            }
        }
        if self.delay_ns_per_m == 0.0 {
            return Err("ns per metre must be positive".into());
        }
        Ok(())
    }

    /// Mean time from the photon pair's creation to the cell being armed.
    pub fn mean_ready_ns(&self, click_time_ns: f64) -> f64 {
        click_time_ns + self.detector_latency_ns + self.risetime_ns
    }

    pub fn transit_ns(&self, delay_length_m: f64) -> f64 {
        delay_length_m * self.delay_ns_per_m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    PhotonEmitted,
    AliceClick,
    HvReady,
    PhotonAtEop,
    EopApplied,
    EopMissed,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventKind::PhotonEmitted => "PhotonEmitted",
            EventKind::AliceClick => "AliceClick",
            EventKind::HvReady => "HvReady",
            EventKind::PhotonAtEop => "PhotonAtEop",
            EventKind::EopApplied => "EopApplied",
            EventKind::EopMissed => "EopMissed",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub timestamp_ns: f64,
    pub kind: EventKind,
    pub detail: &'static str,
}

/// Events of one trial, kept in timestamp order. Ties keep insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        EventLog::default()
    }

    pub fn push(&mut self, timestamp_ns: f64, kind: EventKind, detail: &'static str) {
        let at = self.events.partition_point(|e| e.timestamp_ns <= timestamp_ns);
        self.events.insert(
            at,
            Event {
                timestamp_ns,
                kind,
                detail,
            },
        );
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn kinds(&self) -> Vec<EventKind> {
        self.events.iter().map(|e| e.kind).collect()
    }

    pub fn contains(&self, kind: EventKind) -> bool {
        self.events.iter().any(|e| e.kind == kind)
    }

    pub fn is_sorted(&self) -> bool {
        self.events
            .windows(2)
            .all(|w| w[0].timestamp_ns <= w[1].timestamp_ns)
    }

    /// Writes `timestamp_ns,event,detail` rows. `context` is prefixed to each
    /// detail, separated by `;`.
    pub fn write_csv_rows<W: Write>(&self, out: &mut W, context: &str) -> io::Result<()> {
        for e in &self.events {
            let detail = match (context.is_empty(), e.detail.is_empty()) {
                (true, _) => e.detail.to_string(),
                (false, true) => context.to_string(),
                (false, false) => format!("{context};{}", e.detail),
            };
            writeln!(out, "{},{},{}", e.timestamp_ns, e.kind, detail)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = b"timestamp_ns,event,detail\n".to_vec();
        self.write_csv_rows(&mut buf, "").expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RaceOutcome {
    pub armed_in_time: bool,
    pub hv_ready_ns: f64,
    pub photon_at_eop_ns: f64,
    pub log: EventLog,
}

/// Races the HV switch against the channel photon. The photon reaches the
/// cell after `delay_length_m` of delay; the cell is armed at the click time
/// plus latency, risetime and Gaussian jitter. A tie counts as in time.
///
/// The generator is touched only when the jitter is nonzero.
pub fn race<R: Rng + ?Sized>(
    click_time_ns: f64,
    timing: &TimingModel,
    delay_length_m: f64,
    rng: &mut R,
) -> RaceOutcome {
    let jitter = if timing.jitter_sigma_ns > 0.0 {
        rng.sample::<f64, _>(StandardNormal) * timing.jitter_sigma_ns
    } else {
        0.0
    };
    let hv_ready_ns = (timing.mean_ready_ns(click_time_ns) + jitter).max(click_time_ns);
    let photon_at_eop_ns = timing.transit_ns(delay_length_m);
    let armed_in_time = hv_ready_ns <= photon_at_eop_ns;

    let mut log = EventLog::new();
    log.push(0.0, EventKind::PhotonEmitted, "");
    log.push(click_time_ns, EventKind::AliceClick, "D2");
    log.push(hv_ready_ns, EventKind::HvReady, "");
    log.push(photon_at_eop_ns, EventKind::PhotonAtEop, "");
    RaceOutcome {
        armed_in_time,
        hv_ready_ns,
        photon_at_eop_ns,
        log,
    }
}

/// Alice detector that fired alone in a trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trigger {
    D1,
    D2,
}

/// The correction is applied only for a D2 trigger that won the race.
pub fn effective_correction(trigger: Trigger, armed_in_time: bool) -> bool {
    trigger == Trigger::D2 && armed_in_time
}

/// Shortest delay line (m) whose transit covers the mean arming time.
pub fn critical_delay_m(timing: &TimingModel, click_time_ns: f64) -> f64 {
    timing.mean_ready_ns(click_time_ns) / timing.delay_ns_per_m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastics::stream_rng;

    fn armed(len: f64) -> bool {
        race(0.0, &TimingModel::default(), len, &mut stream_rng(0, 0)).armed_in_time
    }

    #[test]
    fn default_bench_delay_wins() {
        assert!(armed(8.0));
        assert!(!armed(7.0));
        assert!(!armed(6.0));
    }

    #[test]
    fn single_flip_at_critical_length() {
        let crit = critical_delay_m(&TimingModel::default(), 0.0);
        assert!((crit - 22.0 / 3.0).abs() < 1e-12);
        let mut flips = 0;
        let mut prev = armed(0.0);
        for i in 1..=1600 {
            let now = armed(i as f64 * 0.01);
            if now != prev {
                flips += 1;
                assert!((i as f64 * 0.01 - crit).abs() <= 0.01 + 1e-12);
            }
            prev = now;
        }
        assert_eq!(flips, 1);
    }

    #[test]
    fn log_is_ordered_and_complete() {
        let out = race(0.0, &TimingModel::default(), 8.0, &mut stream_rng(0, 0));
        assert_eq!(
            out.log.kinds(),
            vec![
                EventKind::PhotonEmitted,
                EventKind::AliceClick,
                EventKind::HvReady,
                EventKind::PhotonAtEop
            ]
        );
        assert_eq!(out.hv_ready_ns, 22.0);
        assert_eq!(out.photon_at_eop_ns, 24.0);
        let late = race(0.0, &TimingModel::default(), 6.0, &mut stream_rng(0, 0));
        assert_eq!(late.log.kinds()[2], EventKind::PhotonAtEop);
        assert!(late.log.is_sorted());
    }

    #[test]
    fn jitter_never_arms_before_the_click() {
        let timing = TimingModel {
            jitter_sigma_ns: 100.0,
            ..TimingModel::default()
        };
        let mut rng = stream_rng(2, 0);
        for _ in 0..1000 {
            let out = race(5.0, &timing, 8.0, &mut rng);
            assert!(out.hv_ready_ns >= 5.0);
            assert!(out.log.is_sorted());
        }
    }

    #[test]
    fn only_a_timely_d2_corrects() {
        assert!(effective_correction(Trigger::D2, true));
        assert!(!effective_correction(Trigger::D2, false));
        assert!(!effective_correction(Trigger::D1, true));
        assert!(!effective_correction(Trigger::D1, false));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let out = race(0.0, &TimingModel::default(), 8.0, &mut stream_rng(0, 0));
        let csv = out.log.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "timestamp_ns,event,detail");
        assert_eq!(lines[2], "0,AliceClick,D2");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn timing_validation() {
        assert!(TimingModel::default().validate().is_ok());
        let bad = TimingModel {
            delay_ns_per_m: 0.0,
            ..TimingModel::default()
        };
        assert!(bad.validate().is_err());
    }
}
