//! `GET /v1/events/stream`: log entries as server-sent events.
//!
//! Each frame has `id` = global sequence number and `event` = event kind.
//! Clients resume with `Last-Event-ID` or `?since=`. Notifications and work
//! item offers are only sent to the role they address.

use std::collections::VecDeque;
use std::convert::Infallible;
use std::time::Duration as StdDuration;

use axum::extract::{Query, State};
use axum::http::HeaderMap;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::IntoResponse;
use carepath_core::engine::EventKind;
use carepath_core::eventlog::EventLogEntry;
use futures::stream::{self, Stream};
use serde::Deserialize;
use tokio::sync::broadcast::error::RecvError;
use tokio::sync::broadcast::Receiver;

use crate::{header, AppState};

#[derive(Deserialize)]
pub(crate) struct StreamQuery {
    since: Option<u64>,
    role: Option<String>,
}

/// Whether a client acting as `role` may see `entry`.
pub(crate) fn visible_to(entry: &EventLogEntry, role: Option<&str>) -> bool {
    let addressed = match &entry.event.kind {
        EventKind::NotificationRaised { role, .. }
        | EventKind::WorkItemCreated { role, .. }
        | EventKind::WorkItemNotified { role, .. } => role.as_str(),
        _ => return true,
    };
    role == Some(addressed)
}

fn frame(entry: &EventLogEntry) -> Event {
    Event::default()
        .id(entry.global_seq.to_string())
        .event(entry.kind())
        .data(serde_json::to_string(entry).expect("entries serialize"))
}

struct Cursor {
    state: AppState,
    rx: Receiver<EventLogEntry>,
    pending: VecDeque<EventLogEntry>,
    last: u64,
    role: Option<String>,
}

impl Cursor {
    async fn next(&mut self) -> Option<EventLogEntry> {
        loop {
            if let Some(entry) = self.pending.pop_front() {
                if entry.global_seq <= self.last {
                    continue;
                }
                self.last = entry.global_seq;
                if visible_to(&entry, self.role.as_deref()) {
                    return Some(entry);
                }
                continue;
            }
            match self.rx.recv().await {
                Ok(entry) => self.pending.push_back(entry),
                // Fell behind the channel: catch up from the log.
                Err(RecvError::Lagged(_)) => self.pending.extend(self.state.rt.entries_since(self.last)),
                Err(RecvError::Closed) => return None,
            }
        }
    }
}

pub(crate) async fn stream(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(q): Query<StreamQuery>,
) -> impl IntoResponse {
    let resume = header(&headers, "last-event-id").and_then(|v| v.parse::<u64>().ok());
    let since = resume.or(q.since).unwrap_or(0);
    let role = q.role.or_else(|| header(&headers, "x-role").map(str::to_string));
    // Subscribe first so nothing committed between the two steps is lost.
    let rx = state.subscribe();
    let backlog: VecDeque<_> = state.rt.entries_since(since).into();
    let cursor = Cursor {
        state,
        rx,
        pending: backlog,
        last: since,
        role,
    };
    Sse::new(events(cursor)).keep_alive(KeepAlive::new().interval(StdDuration::from_secs(15)))
}

fn events(cursor: Cursor) -> impl Stream<Item = Result<Event, Infallible>> {
    stream::unfold(cursor, |mut c| async move {
        let entry = c.next().await?;
        Some((Ok(frame(&entry)), c))
    })
}
