//! Session store and event journal under concurrent use.

mod common;

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;
use tutor::store::{EventJournal, JournalError, SessionStore, StoreError, MAX_PAYLOAD_BYTES};
use tutor_core::{EventKind, InteractionEvent};

use common::random_session;

fn event(session: &str, n: u64) -> InteractionEvent {
    InteractionEvent {
        event_id: tutor::random_id(),
        session_id: session.to_string(),
        kind: EventKind::TurnCompleted,
        payload: serde_json::json!({ "n": n }),
        timestamp: 1_000 + n % 7,
        seq: 0,
    }
}

#[test]
fn ten_thousand_appends_from_32_threads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let journal = Arc::new(EventJournal::open(&path).unwrap());
    let workers: Vec<_> = (0..32)
        .map(|t| {
            let journal = Arc::clone(&journal);
            thread::spawn(move || {
                let per = if t < 16 { 313 } else { 312 };
                (0..per).map(|n| journal.append(event(&format!("t{t}"), n)).unwrap()).collect::<Vec<u64>>()
            })
        })
        .collect();
    let mut returned: Vec<u64> = Vec::new();
    for w in workers {
        let seqs = w.join().unwrap();
        assert!(seqs.windows(2).all(|p| p[0] < p[1]), "a thread saw its seqs out of order");
        returned.extend(seqs);
    }
    returned.sort_unstable();
    assert_eq!(returned, (1..=10_000).collect::<Vec<u64>>());

    let events = journal.scan().unwrap();
    assert_eq!(events.len(), 10_000);
    assert!(events.iter().zip(1..).all(|(e, s)| e.seq == s));
    // Within each writer the payload counter follows seq order.
    let mut last: HashMap<&str, u64> = HashMap::new();
    for e in &events {
        let n = e.payload["n"].as_u64().unwrap();
        if let Some(prev) = last.insert(&e.session_id, n) {
            assert_eq!(n, prev + 1);
        }
    }
    let one = journal.scan_session("t3").unwrap();
    assert_eq!(one.len(), 313);
    assert!(one.windows(2).all(|w| (w[0].timestamp, w[0].seq) < (w[1].timestamp, w[1].seq)));
    assert_eq!(journal.dropped(), 0);
    drop(journal);

    let reopened = EventJournal::open(&path).unwrap();
    assert_eq!(reopened.append(event("after", 0)).unwrap(), 10_001);
}

#[test]
fn torn_tail_is_skipped_and_later_appends_stay_readable() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    {
        let j = EventJournal::open(&path).unwrap();
        j.append(event("s", 0)).unwrap();
        j.append(event("s", 1)).unwrap();
    }
    OpenOptions::new()
        .append(true)
        .open(&path)
        .unwrap()
        .write_all(b"{\"event_id\":\"dead")
        .unwrap();
    let j = EventJournal::open(&path).unwrap();
    assert_eq!(j.append(event("s", 2)).unwrap(), 3);
    let seqs: Vec<u64> = j.scan().unwrap().iter().map(|e| e.seq).collect();
    assert_eq!(seqs, [1, 2, 3]);
}

#[test]
fn oversized_payloads_are_rejected_or_counted() {
    let dir = tempfile::tempdir().unwrap();
    let j = EventJournal::open(dir.path().join("e.jsonl")).unwrap();
    let mut big = event("s", 0);
    big.payload = serde_json::json!({ "blob": "x".repeat(MAX_PAYLOAD_BYTES) });
    assert!(matches!(j.append(big.clone()), Err(JournalError::Size { .. })));
    j.record(big);
    assert_eq!(j.dropped(), 1);
    assert!(j.scan().unwrap().is_empty());
}

#[test]
fn leases_and_versions_guard_every_save() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path(), Duration::from_millis(200)).unwrap();
    let mut rng = StdRng::seed_from_u64(7);
    let s = random_session(&mut rng);
    let id = s.session_id.clone();
    assert_eq!(store.create(&s).unwrap(), 1);
    assert!(matches!(store.create(&s), Err(StoreError::AlreadyExists(_))));

    let lease = store.acquire(&id).unwrap();
    assert!(matches!(store.acquire(&id), Err(StoreError::Conflict { .. })));
    assert!(matches!(store.save(&lease, 7, &s), Err(StoreError::Conflict { .. })));
    assert_eq!(store.save(&lease, 1, &s).unwrap(), 2);
    assert!(matches!(store.save(&lease, 1, &s), Err(StoreError::Conflict { .. })));
    store.release(&lease);
    assert!(matches!(store.save(&lease, 2, &s), Err(StoreError::Conflict { .. })));

    // An expired lease can be taken over, and its old holder is locked out.
    let stale = store.acquire(&id).unwrap();
    thread::sleep(Duration::from_millis(250));
    let fresh = store.acquire(&id).unwrap();
    assert!(matches!(store.save(&stale, 2, &s), Err(StoreError::Conflict { .. })));
    store.release(&stale);
    assert_eq!(store.save(&fresh, 2, &s).unwrap(), 3);

    assert!(matches!(store.load("../../etc/passwd"), Err(StoreError::NotFound(_))));
    assert!(matches!(store.load(&tutor::random_id()), Err(StoreError::NotFound(_))));
}

#[test]
fn racing_saves_under_one_lease_commit_once() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(SessionStore::open(dir.path(), Duration::from_secs(30)).unwrap());
    let mut rng = StdRng::seed_from_u64(11);
    let s = random_session(&mut rng);
    store.create(&s).unwrap();
    let lease = store.acquire(&s.session_id).unwrap();
    let outcomes: Vec<bool> = (0..16)
        .map(|_| {
            let (store, lease, s) = (Arc::clone(&store), lease.clone(), s.clone());
            thread::spawn(move || store.save(&lease, 1, &s).is_ok())
        })
        .collect::<Vec<_>>()
        .into_iter()
        .map(|h| h.join().unwrap())
        .collect();
    assert_eq!(outcomes.iter().filter(|ok| **ok).count(), 1);
    assert_eq!(store.load(&s.session_id).unwrap().1, 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn saved_sessions_load_back_unchanged(seed in any::<u64>(), saves in 1usize..4) {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path(), Duration::from_secs(30)).unwrap();
        let mut rng = StdRng::seed_from_u64(seed);
        let first = random_session(&mut rng);
        store.create(&first).unwrap();
        let lease = store.acquire(&first.session_id).unwrap();
        let mut version = 1;
        let mut last = first.clone();
        for _ in 0..saves {
            last = tutor_core::SessionState { session_id: first.session_id.clone(), ..random_session(&mut rng) };
            version = store.save(&lease, version, &last).unwrap();
        }
        let reopened = SessionStore::open(dir.path(), Duration::from_secs(30)).unwrap();
        prop_assert_eq!(reopened.load(&first.session_id).unwrap(), (last, version));
    }
}
