#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use amanda_core::tts::{AudioSettings, TtsConfig, TtsModelParams};
use amanda_core::signal::MelConfig;
use amanda_service::http::{build_engine, serve};
use amanda_service::ServiceConfig;
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub struct Server {
    pub base: String,
    stop: Option<oneshot::Sender<()>>,
    handle: Option<JoinHandle<()>>,
    pub client: reqwest::Client,
}

impl Server {
    pub async fn start(cfg: &ServiceConfig) -> Server {
        let engine = Arc::new(build_engine(cfg).expect("engine"));
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = oneshot::channel::<()>();
        let static_dir = cfg.static_dir.clone();
        let handle = tokio::spawn(async move {
            serve(listener, engine, static_dir, async move {
                let _ = rx.await;
            })
            .await
            .unwrap();
        });
        Server { base, stop: Some(tx), handle: Some(handle), client: reqwest::Client::new() }
    }

    pub async fn stop(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.handle.take().unwrap().await.unwrap();
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn chat(&self, session: &str, text: &str, lang: &str) -> Value {
        let resp = self
            .client
            .post(self.url("/api/chat"))
            .json(&json!({ "session_id": session, "text": text, "language": lang }))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 200, "chat {text:?}");
        resp.json().await.unwrap()
    }

    pub async fn history(&self, session: &str) -> (u16, Value) {
        let resp = self.client.get(self.url(&format!("/api/history/{session}"))).send().await.unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap())
    }
}

pub fn config(store: &Path) -> ServiceConfig {
    ServiceConfig::new(store)
}

/// Writes a small randomly initialised TTS checkpoint.
pub fn tiny_tts_checkpoint(dir: &Path) -> PathBuf {
    let mut audio = AudioSettings::default();
    audio.mel = MelConfig { n_mels: 8, ..audio.mel };
    let c = TtsConfig { d_emb: 8, d_enc: 8, d_dec: 8, d_att: 8, n_mels: 8, postnet_channels: 8, postnet_kernel: 3, ..Default::default() };
    let params = TtsModelParams::init(c, audio, 3).unwrap();
    let path = dir.join("tts.ckpt");
    params.save(&path, json!({})).unwrap();
    path
}

pub fn kinds(records: &Value) -> Vec<String> {
    records.as_array().unwrap().iter().map(|r| r["reply_kind"].as_str().unwrap_or("-").to_string()).collect()
}
