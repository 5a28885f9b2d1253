//! In-memory sessions: append-only turns and a small LRU of full results.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use lru::LruCache;
use medsql_core::execution_sandbox::{AbstainReason, PriorTurn};
use medsql_core::QueryResult;
use serde::Serialize;

pub const RESULT_CAPACITY: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Abstained,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Turn {
    pub index: usize,
    pub question: String,
    pub model: String,
    pub status: Status,
    pub sql: Option<String>,
    pub result_id: Option<String>,
    pub abstain_reason: Option<AbstainReason>,
}

#[derive(Debug, Clone)]
pub struct StoredResult {
    pub question: String,
    pub sql: String,
    pub result: QueryResult,
}

pub struct Session {
    pub id: String,
    pub database: String,
    turns: Vec<Turn>,
    results: LruCache<String, StoredResult>,
}

impl Session {
    pub fn new(id: String, database: String) -> Self {
        Self {
            id,
            database,
            turns: Vec::new(),
            results: LruCache::new(NonZeroUsize::new(RESULT_CAPACITY).unwrap()),
        }
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    /// Answered turns in order; the pipeline keeps only the most recent few.
    pub fn prior_turns(&self) -> Vec<PriorTurn> {
        self.turns
            .iter()
            .filter_map(|t| {
                t.sql.as_ref().map(|sql| PriorTurn {
                    question: t.question.clone(),
                    sql: sql.clone(),
                })
            })
            .collect()
    }

    /// Appends a turn, retaining its result under a fresh opaque id.
    pub fn push(
        &mut self,
        question: &str,
        model: &str,
        answer: Result<(String, QueryResult), AbstainReason>,
    ) -> &Turn {
        let index = self.turns.len();
        let turn = match answer {
            Ok((sql, result)) => {
                let id = uuid::Uuid::new_v4().simple().to_string();
                self.results.put(
                    id.clone(),
                    StoredResult {
                        question: question.to_string(),
                        sql: sql.clone(),
                        result,
                    },
                );
                Turn {
                    index,
                    question: question.to_string(),
                    model: model.to_string(),
                    status: Status::Ok,
                    sql: Some(sql),
                    result_id: Some(id),
                    abstain_reason: None,
                }
            }
            Err(reason) => Turn {
                index,
                question: question.to_string(),
                model: model.to_string(),
                status: Status::Abstained,
                sql: None,
                result_id: None,
                abstain_reason: Some(reason),
            },
        };
        self.turns.push(turn);
        &self.turns[index]
    }

    pub fn result(&mut self, result_id: &str) -> Option<&StoredResult> {
        self.results.get(result_id)
    }

    pub fn retained(&self) -> usize {
        self.results.len()
    }
}

pub type SessionHandle = Arc<Mutex<Session>>;

/// Session table. Its lock is held only to look up or insert a handle;
/// work on a session holds that session's own lock.
#[derive(Default)]
pub struct Sessions {
    inner: Mutex<HashMap<String, SessionHandle>>,
}

impl Sessions {
    pub fn get(&self, id: &str) -> Option<SessionHandle> {
        self.inner.lock().unwrap().get(id).cloned()
    }

    /// Returns the session, creating it when `id` is new or absent.
    pub fn get_or_create(&self, id: Option<&str>, database: &str) -> SessionHandle {
        let id = id
            .map(str::to_string)
            .unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string());
        let mut map = self.inner.lock().unwrap();
        map.entry(id.clone())
            .or_insert_with(|| Arc::new(Mutex::new(Session::new(id, database.to_string()))))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
