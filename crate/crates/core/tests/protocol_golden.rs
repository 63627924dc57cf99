//! Golden wire frames. Set COVRL_BLESS=1 to rewrite the fixture files.

mod common;

use std::fs;
use std::io::Cursor;

use covrl::protocol::{
    self, DecodeOptions, FinetuneRecord, FinetuneReport, FinetuneRequest, InfillRequest, Request, Response,
};

fn requests() -> Vec<(&'static str, Request)> {
    vec![
        ("ping", Request::Ping),
        (
            "infill",
            Request::Infill(InfillRequest {
                id: 7,
                masked_tokens: ["let", "x", "=", "<extra_id_0>", ";", "print", "(", "<extra_id_1>", ")", ";"]
                    .map(String::from)
                    .to_vec(),
                slots: 2,
                decode: DecodeOptions::default(),
            }),
        ),
        (
            "finetune",
            Request::Finetune(FinetuneRequest {
                cycle: 3,
                records: vec![
                    FinetuneRecord {
                        masked_tokens: ["<extra_id_0>", "(", "1", ")"].map(String::from).to_vec(),
                        fill_tokens: vec![vec!["print".into()]],
                        reward: 0.5,
                    },
                    FinetuneRecord {
                        masked_tokens: ["let", "<extra_id_0>"].map(String::from).to_vec(),
                        fill_tokens: vec![vec!["=".into(), ";".into()]],
                        reward: -1.0,
                    },
                ],
                epochs: 1,
            }),
        ),
    ]
}

fn responses() -> Vec<(&'static str, Response)> {
    vec![
        ("pong", Response::Pong { model: "covrl-mock-unigram".into() }),
        (
            "infill_reply",
            Response::Infill {
                id: 7,
                fills: vec![vec!["42".into()], vec!["x".into(), "+".into(), "1".into()]],
            },
        ),
        (
            "finetune_reply",
            Response::Finetune(FinetuneReport {
                cycle: 3,
                loss_before: 0.75,
                loss_after: 0.625,
            }),
        ),
        ("error_reply", Response::Error { message: "unknown request type".into() }),
    ]
}

fn frame_bytes<T: serde::Serialize>(msg: &T) -> Vec<u8> {
    let mut buf = Vec::new();
    protocol::send(&mut buf, msg).unwrap();
    buf
}

fn check<T>(name: &str, msg: &T)
where
    T: serde::Serialize + for<'de> serde::Deserialize<'de> + PartialEq + std::fmt::Debug,
{
    let path = common::fixture("frames").join(format!("{name}.bin"));
    let bytes = frame_bytes(msg);
    if std::env::var_os("COVRL_BLESS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, &bytes).unwrap();
    }
    let golden = fs::read(&path).unwrap_or_else(|e| panic!("{}: {e} (run with COVRL_BLESS=1)", path.display()));
    assert_eq!(bytes, golden, "{name} encoding drifted");
    let len = u32::from_be_bytes(golden[..4].try_into().unwrap()) as usize;
    assert_eq!(len, golden.len() - 4, "{name} length prefix");
    let back: T = protocol::receive(&mut Cursor::new(&golden)).unwrap().unwrap();
    assert_eq!(&back, msg);
}

#[test]
fn request_frames_match_golden() {
    for (name, req) in requests() {
        check(name, &req);
    }
}

#[test]
fn response_frames_match_golden() {
    for (name, resp) in responses() {
        check(name, &resp);
    }
}

#[test]
fn frames_are_tagged_json() {
    let golden = fs::read(common::fixture("frames").join("ping.bin")).unwrap();
    assert_eq!(&golden[4..], br#"{"type":"ping"}"#);
}
