mod common;

use common::desk::{crafted_dataset as crafted, raw_item as raw, Desk};
use medsql_core::eval_harness::{load_jsonl, preprocess_dataset, split_dataset, write_jsonl, DropReason, EvalItem, RawItem};
use medsql_core::ExecLimits;

#[test]
fn crafted_set_keeps_the_ten_good_items() {
    let desk = Desk::new();
    let (items, expected) = crafted();
    assert_eq!(items.len(), 20);
    let pre = preprocess_dataset(&items, &desk.conn, ExecLimits::default());
    assert_eq!(pre.kept.len(), 10);
    assert!(pre.kept.iter().all(|i| i.id.starts_with("desk-")));
    let got: Vec<(&str, DropReason)> = pre.dropped.iter().map(|d| (d.id.as_str(), d.reason)).collect();
    assert_eq!(got, expected);
}

#[test]
fn preprocessing_is_idempotent() {
    let desk = Desk::new();
    let (items, _) = crafted();
    let once = preprocess_dataset(&items, &desk.conn, ExecLimits::default());
    let again: Vec<RawItem> = once.kept.iter().cloned().map(RawItem::from).collect();
    let twice = preprocess_dataset(&again, &desk.conn, ExecLimits::default());
    assert!(twice.dropped.is_empty());
    assert_eq!(twice.kept, once.kept);
}

#[test]
fn unanswerable_items_are_kept_without_gold() {
    let desk = Desk::new();
    let item = RawItem {
        answerable: false,
        sql: None,
        ..raw("u", "")
    };
    let pre = preprocess_dataset(&[item], &desk.conn, ExecLimits::default());
    assert_eq!(pre.kept.len(), 1);
    assert!(!pre.kept[0].answerable);
    let missing = RawItem { sql: None, ..raw("m", "") };
    let pre = preprocess_dataset(&[missing], &desk.conn, ExecLimits::default());
    assert_eq!(pre.dropped[0].reason, DropReason::MissingGold);
}

#[test]
fn split_sizes_follow_the_ten_ninety_rule() {
    let items: Vec<usize> = (0..785).collect();
    let s = split_dataset(&items, 0.1, 0.9, 42).unwrap();
    assert_eq!((s.validation.len(), s.test.len()), (78, 707));
    assert_ne!(s.validation, (0..78).collect::<Vec<_>>());
}

#[test]
fn dataset_files_round_trip() {
    let desk = Desk::new();
    let kept = desk.items();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("items.jsonl");
    write_jsonl(&path, &kept).unwrap();
    let back: Vec<EvalItem> = load_jsonl(&path).unwrap();
    assert_eq!(back, kept);
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), kept.len());
}
