//! Scoreboards filtered by the session's publishing mode.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Publishing {
    #[default]
    Off,
    ByGroup,
    ByStudent,
}

/// What the scoreboard knows about one player.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEntry {
    pub player_id: String,
    pub display_name: String,
    pub group: Option<String>,
    pub hide_score: bool,
    /// Grades of the cases the player has finished.
    pub grades: Vec<f64>,
}

impl ScoreEntry {
    /// Mean grade over finished cases.
    pub fn score(&self) -> Option<f64> {
        mean(&self.grades)
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Viewer<'a> {
    Teacher,
    Player(&'a str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerRow {
    pub player_id: String,
    pub display_name: String,
    pub group: Option<String>,
    pub score: Option<f64>,
    pub cases_completed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    /// `None` collects players who joined without a group.
    pub group: Option<String>,
    pub players: usize,
    /// Mean of the group's player scores; players with no finished case
    /// are left out.
    pub mean_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scoreboard {
    pub publishing: Publishing,
    pub teacher: bool,
    pub players: Vec<PlayerRow>,
    pub groups: Vec<GroupRow>,
}

fn row(e: &ScoreEntry) -> PlayerRow {
    PlayerRow {
        player_id: e.player_id.clone(),
        display_name: e.display_name.clone(),
        group: e.group.clone(),
        score: e.score(),
        cases_completed: e.grades.len(),
    }
}

fn groups(entries: &[ScoreEntry]) -> Vec<GroupRow> {
    let mut by_group: BTreeMap<Option<&str>, Vec<&ScoreEntry>> = BTreeMap::new();
    for e in entries {
        by_group.entry(e.group.as_deref()).or_default().push(e);
    }
    by_group
        .into_iter()
        .map(|(g, members)| {
            let scores: Vec<f64> = members.iter().filter_map(|m| m.score()).collect();
            GroupRow {
                group: g.map(str::to_string),
                players: members.len(),
                mean_score: mean(&scores),
            }
        })
        .collect()
}

/// The teacher sees every row and every group. Learners see their own row
/// only (`off`), group aggregates only (`by_group`), or every row except
/// those of other players who hid their score (`by_student`).
pub fn scoreboard(
    publishing: Publishing,
    entries: &[ScoreEntry],
    viewer: Viewer<'_>,
) -> Scoreboard {
    let (players, groups) = match (viewer, publishing) {
        (Viewer::Teacher, _) => (entries.iter().map(row).collect(), groups(entries)),
        (Viewer::Player(me), Publishing::Off) => (
            entries
                .iter()
                .filter(|e| e.player_id == me)
                .map(row)
                .collect(),
            Vec::new(),
        ),
        (Viewer::Player(_), Publishing::ByGroup) => (Vec::new(), groups(entries)),
        (Viewer::Player(me), Publishing::ByStudent) => (
            entries
                .iter()
                .filter(|e| !e.hide_score || e.player_id == me)
                .map(row)
                .collect(),
            Vec::new(),
        ),
    };
    Scoreboard {
        publishing,
        teacher: viewer == Viewer::Teacher,
        players,
        groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, group: Option<&str>, hide: bool, grades: &[f64]) -> ScoreEntry {
        ScoreEntry {
            player_id: id.into(),
            display_name: id.to_uppercase(),
            group: group.map(str::to_string),
            hide_score: hide,
            grades: grades.to_vec(),
        }
    }

    #[test]
    fn group_means_are_hand_computed() {
        let entries = [
            entry("a1", Some("A"), false, &[80.0, 100.0]),
            entry("a2", Some("A"), false, &[60.0]),
            entry("b1", Some("B"), true, &[75.0]),
        ];
        let board = scoreboard(Publishing::ByGroup, &entries, Viewer::Player("a2"));
        assert!(board.players.is_empty());
        // A: (90 + 60) / 2, B: 75
        assert_eq!(
            board.groups,
            vec![
                GroupRow {
                    group: Some("A".into()),
                    players: 2,
                    mean_score: Some(75.0)
                },
                GroupRow {
                    group: Some("B".into()),
                    players: 1,
                    mean_score: Some(75.0)
                },
            ]
        );
    }

    #[test]
    fn hidden_player_sees_self_only_among_hidden() {
        let entries = [
            entry("p", None, true, &[50.0]),
            entry("q", None, false, &[70.0]),
        ];
        let ids = |b: Scoreboard| {
            b.players
                .into_iter()
                .map(|r| r.player_id)
                .collect::<Vec<_>>()
        };
        assert_eq!(
            ids(scoreboard(
                Publishing::ByStudent,
                &entries,
                Viewer::Player("q")
            )),
            ["q"]
        );
        assert_eq!(
            ids(scoreboard(
                Publishing::ByStudent,
                &entries,
                Viewer::Player("p")
            )),
            ["p", "q"]
        );
        assert_eq!(
            ids(scoreboard(Publishing::ByStudent, &entries, Viewer::Teacher)),
            ["p", "q"]
        );
        assert_eq!(
            ids(scoreboard(Publishing::Off, &entries, Viewer::Player("q"))),
            ["q"]
        );
    }

    #[test]
    fn unplayed_players_have_no_score() {
        let e = entry("x", Some("A"), false, &[]);
        assert_eq!(e.score(), None);
        let board = scoreboard(Publishing::ByGroup, &[e], Viewer::Teacher);
        assert_eq!(board.groups[0].mean_score, None);
        assert_eq!(board.players[0].cases_completed, 0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn entries() -> impl Strategy<Value = Vec<ScoreEntry>> {
            prop::collection::vec(
                (
                    prop::option::of(0..3u8),
                    any::<bool>(),
                    prop::collection::vec(0..=100u8, 0..3),
                ),
                1..8,
            )
            .prop_map(|rows| {
                rows.into_iter()
                    .enumerate()
                    .map(|(i, (g, hide, grades))| ScoreEntry {
                        player_id: format!("p{i}"),
                        display_name: format!("P{i}"),
                        group: g.map(|g| format!("g{g}")),
                        hide_score: hide,
                        grades: grades.into_iter().map(f64::from).collect(),
                    })
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn learners_never_see_hidden_peers(entries in entries(), me in 0..8usize) {
                let me = format!("p{}", me % entries.len());
                for mode in [Publishing::Off, Publishing::ByGroup, Publishing::ByStudent] {
                    let board = scoreboard(mode, &entries, Viewer::Player(&me));
                    for row in &board.players {
                        let e = entries.iter().find(|e| e.player_id == row.player_id).unwrap();
                        prop_assert!(row.player_id == me || (mode == Publishing::ByStudent && !e.hide_score));
                    }
                    if mode != Publishing::ByGroup {
                        prop_assert!(board.players.iter().any(|r| r.player_id == me));
                    }
                    prop_assert!(mode == Publishing::ByGroup || board.groups.is_empty());
                }
                let teacher = scoreboard(Publishing::Off, &entries, Viewer::Teacher);
                prop_assert_eq!(teacher.players.len(), entries.len());
                let players: usize = teacher.groups.iter().map(|g| g.players).sum();
                prop_assert_eq!(players, entries.len());
            }
        }
    }
}
