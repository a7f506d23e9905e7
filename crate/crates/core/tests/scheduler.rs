use std::collections::BTreeSet;

use carepath_core::ids::TimerId;
use carepath_core::scheduler::{Scheduler, SchedulerError, TimerPurpose, TimerState};
use carepath_core::time::{Duration, Instant};
use proptest::prelude::*;

fn at(min: u64) -> Instant {
    Instant::parse_rfc3339("2025-03-01T08:00:00Z").unwrap() + Duration::from_minutes(min)
}

#[derive(Debug, Clone)]
enum Op {
    Schedule(u64),
    Cancel(usize),
    Advance(u64),
}

fn ops() -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(
        prop_oneof![
            4 => (0u64..600).prop_map(Op::Schedule),
            1 => any::<usize>().prop_map(Op::Cancel),
            2 => (0u64..300).prop_map(Op::Advance),
        ],
        1..60,
    )
}

/// Reference model: a plain list of (due, id, live) entries.
#[derive(Default)]
struct Model {
    now: u64,
    timers: Vec<(u64, u64, bool)>,
}

impl Model {
    fn advance(&mut self, to: u64) -> Vec<u64> {
        let mut due: Vec<_> = self.timers.iter_mut().filter(|t| t.2 && t.0 <= to).collect();
        due.sort_by_key(|t| (t.0, t.1));
        let fired = due.iter().map(|t| t.1).collect();
        for t in due {
            t.2 = false;
        }
        self.now = to;
        fired
    }
}

fn schedule(s: &mut Scheduler, due: Instant) -> TimerId {
    s.schedule("c".into(), "t".into(), TimerPurpose::Temporal, due, None).unwrap()
}

proptest! {
    #[test]
    fn matches_the_reference_model(ops in ops()) {
        let mut s = Scheduler::new(at(0));
        let mut m = Model::default();
        let mut ids = Vec::new();
        for op in ops {
            match op {
                Op::Schedule(delta) => {
                    let id = schedule(&mut s, at(m.now + delta));
                    m.timers.push((m.now + delta, id.0, true));
                    ids.push(id);
                }
                Op::Cancel(k) if !ids.is_empty() => {
                    let id = ids[k % ids.len()];
                    let entry = m.timers.iter_mut().find(|t| t.1 == id.0).unwrap();
                    let previous = s.cancel(id).unwrap();
                    prop_assert_eq!(previous == TimerState::Pending, entry.2);
                    entry.2 = false;
                }
                Op::Cancel(_) => {}
                Op::Advance(delta) => {
                    let to = m.now + delta;
                    let fired: Vec<u64> = s.advance_to(at(to)).unwrap().iter().map(|t| t.timer_id.0).collect();
                    prop_assert_eq!(fired, m.advance(to));
                }
            }
            prop_assert_eq!(s.now(), at(m.now));
            prop_assert_eq!(s.pending_count(), m.timers.iter().filter(|t| t.2).count());
        }
    }

    #[test]
    fn advancing_in_steps_fires_the_same_sequence(
        dues in prop::collection::vec(0u64..1000, 0..40),
        cuts in prop::collection::btree_set(0u64..1000, 0..10),
        end in 0u64..1200,
    ) {
        let mut whole = Scheduler::new(at(0));
        let mut parts = Scheduler::new(at(0));
        for &d in &dues {
            schedule(&mut whole, at(d));
            schedule(&mut parts, at(d));
        }
        let once: Vec<_> = whole.advance_to(at(end)).unwrap();
        let mut stepped = Vec::new();
        for &c in cuts.iter().filter(|&&c| c <= end) {
            stepped.extend(parts.advance_to(at(c)).unwrap());
        }
        stepped.extend(parts.advance_to(at(end)).unwrap());
        prop_assert_eq!(once, stepped);
        prop_assert_eq!(whole.now(), parts.now());
        prop_assert_eq!(whole.pending_count(), parts.pending_count());
    }

    #[test]
    fn nothing_fires_early(dues in prop::collection::vec(0u64..500, 1..30), steps in prop::collection::vec(0u64..120, 1..20)) {
        let mut s = Scheduler::new(at(0));
        for &d in &dues {
            schedule(&mut s, at(d));
        }
        let mut now = 0;
        for step in steps {
            now += step;
            for t in s.advance_to(at(now)).unwrap() {
                prop_assert!(t.due_at <= at(now));
                prop_assert_eq!(t.state, TimerState::Fired);
            }
            prop_assert!(s.pending().all(|t| t.due_at > at(now)));
        }
    }

    #[test]
    fn a_timer_fires_or_is_cancelled_never_both(
        dues in prop::collection::vec(0u64..300, 1..30),
        plan in prop::collection::vec((any::<prop::sample::Index>(), 0u64..60), 0..40),
    ) {
        let mut s = Scheduler::new(at(0));
        let ids: Vec<_> = dues.iter().map(|&d| schedule(&mut s, at(d))).collect();
        let mut fired = BTreeSet::new();
        let mut cancelled = BTreeSet::new();
        let mut now = 0;
        for (pick, step) in plan {
            let id = ids[pick.index(ids.len())];
            if s.cancel(id).unwrap() == TimerState::Pending {
                prop_assert!(cancelled.insert(id));
            }
            now += step;
            for t in s.advance_to(at(now)).unwrap() {
                prop_assert!(fired.insert(t.timer_id));
            }
        }
        for t in s.advance_to(at(now + 1000)).unwrap() {
            prop_assert!(fired.insert(t.timer_id));
        }
        prop_assert!(fired.is_disjoint(&cancelled));
        prop_assert_eq!(fired.len() + cancelled.len(), ids.len());
        for id in ids {
            let state = s.timer(id).unwrap().state;
            prop_assert_eq!(state == TimerState::Fired, fired.contains(&id));
        }
    }
}

#[test]
fn the_clock_never_moves_back() {
    let mut s = Scheduler::new(at(10));
    assert!(matches!(s.advance_to(at(9)), Err(SchedulerError::ClockRegression { .. })));
    assert!(matches!(
        s.schedule("c".into(), "t".into(), TimerPurpose::Temporal, at(9), None),
        Err(SchedulerError::DueInPast { .. })
    ));
    assert_eq!(s.now(), at(10));
}

#[test]
fn simultaneous_timers_fire_in_scheduling_order() {
    let mut s = Scheduler::new(at(0));
    let ids: Vec<_> = (0..5).map(|_| schedule(&mut s, at(30))).collect();
    let fired: Vec<_> = s.advance_to(at(30)).unwrap().into_iter().map(|t| t.timer_id).collect();
    assert_eq!(fired, ids);
}
