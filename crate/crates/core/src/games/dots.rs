use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::game::{Action, Component, Rules, Zone};
use crate::rng::Rng;

use super::{argmax_players, check_players};

const MAX_EDGES: usize = 256;
const MAX_BOXES: usize = 128;

/// Dots and Boxes on an `rows x cols` grid of dots.
///
/// Edges are numbered horizontals first (row-major), then verticals.
/// Completing a box scores it and grants another move.
#[derive(Debug, Clone, PartialEq)]
pub struct DotsAndBoxes {
    rows: usize,
    cols: usize,
    players: usize,
    current: usize,
    turn: u32,
    edges: [u64; MAX_EDGES / 64],
    drawn: usize,
    owner: [i8; MAX_BOXES],
    boxes: [u16; 4],
}

impl DotsAndBoxes {
    pub fn new(players: usize, rows: usize, cols: usize) -> Result<Self> {
        check_players("dotsandboxes", players)?;
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidArgument(format!("grid {rows}x{cols} has no boxes")));
        }
        let g = DotsAndBoxes {
            rows,
            cols,
            players,
            current: 0,
            turn: 0,
            edges: [0; MAX_EDGES / 64],
            drawn: 0,
            owner: [-1; MAX_BOXES],
            boxes: [0; 4],
        };
        if g.edge_count() > MAX_EDGES || g.box_count() > MAX_BOXES {
            return Err(Error::InvalidArgument(format!("grid {rows}x{cols} is too large")));
        }
        Ok(g)
    }

    fn horizontal_count(&self) -> usize {
        self.rows * (self.cols - 1)
    }

    pub fn edge_count(&self) -> usize {
        self.horizontal_count() + (self.rows - 1) * self.cols
    }

    pub fn box_count(&self) -> usize {
        (self.rows - 1) * (self.cols - 1)
    }

    pub fn boxes_owned(&self, player: usize) -> usize {
        self.boxes[player] as usize
    }

    pub fn box_owner(&self, b: usize) -> Option<usize> {
        (self.owner[b] >= 0).then_some(self.owner[b] as usize)
    }

    pub fn is_drawn(&self, edge: usize) -> bool {
        self.edges[edge / 64] & (1 << (edge % 64)) != 0
    }

    fn horizontal(&self, r: usize, c: usize) -> usize {
        r * (self.cols - 1) + c
    }

    fn vertical(&self, r: usize, c: usize) -> usize {
        self.horizontal_count() + r * self.cols + c
    }

    fn box_edges(&self, r: usize, c: usize) -> [usize; 4] {
        [self.horizontal(r, c), self.horizontal(r + 1, c), self.vertical(r, c), self.vertical(r, c + 1)]
    }

    /// Boxes bordering an edge, as (row, col).
    fn adjacent_boxes(&self, edge: usize) -> impl Iterator<Item = (usize, usize)> {
        let (br, bc) = (self.rows - 1, self.cols - 1);
        let mut out = [None, None];
        if edge < self.horizontal_count() {
            let (r, c) = (edge / (self.cols - 1), edge % (self.cols - 1));
            if r > 0 {
                out[0] = Some((r - 1, c));
            }
            if r < br {
                out[1] = Some((r, c));
            }
        } else {
            let e = edge - self.horizontal_count();
            let (r, c) = (e / self.cols, e % self.cols);
            if c > 0 {
                out[0] = Some((r, c - 1));
            }
            if c < bc {
                out[1] = Some((r, c));
            }
        }
        out.into_iter().flatten()
    }

    fn box_complete(&self, r: usize, c: usize) -> bool {
        self.box_edges(r, c).iter().all(|&e| self.is_drawn(e))
    }
}

impl Rules for DotsAndBoxes {
    const NAME: &'static str = "dotsandboxes";

    fn player_count(&self) -> usize {
        self.players
    }

    fn current_player(&self) -> usize {
        self.current
    }

    fn turn_index(&self) -> u32 {
        self.turn
    }

    fn is_terminal(&self) -> bool {
        self.drawn == self.edge_count()
    }

    fn legal_actions(&self) -> Vec<Action> {
        (0..self.edge_count()).filter(|&e| !self.is_drawn(e)).map(|e| Action(e as u32)).collect()
    }

    fn apply_unchecked(&mut self, action: Action, _rng: &mut Rng) {
        let edge = action.0 as usize;
        self.edges[edge / 64] |= 1 << (edge % 64);
        self.drawn += 1;
        self.turn += 1;
        let mut scored = false;
        let adjacent: Vec<_> = self.adjacent_boxes(edge).collect();
        for (r, c) in adjacent {
            if self.box_complete(r, c) {
                self.owner[r * (self.cols - 1) + c] = self.current as i8;
                self.boxes[self.current] += 1;
                scored = true;
            }
        }
        if !scored {
            self.current = (self.current + 1) % self.players;
        }
    }

    fn redeterminize(&mut self, _observer: usize, _rng: &mut Rng) {}

    fn progress_score(&self, player: usize) -> f64 {
        self.boxes[player] as f64 / self.box_count() as f64
    }

    fn winner_set(&self) -> Vec<usize> {
        argmax_players(&self.boxes[..self.players])
    }

    fn component_count(&self) -> usize {
        self.drawn + self.boxes.iter().map(|&b| b as usize).sum::<usize>()
    }

    fn hidden_count(&self, _observer: usize) -> (usize, usize) {
        (0, self.component_count())
    }

    fn components(&self) -> Vec<Component> {
        let edges = (0..self.edge_count()).filter(|&e| self.is_drawn(e)).map(|e| Component {
            id: e as u32,
            zone: Zone::Board,
            hidden_from: 0,
            value: 1,
        });
        let boxes = (0..self.box_count()).filter_map(|b| {
            self.box_owner(b).map(|p| Component {
                id: (MAX_EDGES + b) as u32,
                zone: Zone::Player(p),
                hidden_from: 0,
                value: 1,
            })
        });
        edges.chain(boxes).collect()
    }

    fn observation(&self, _observer: usize) -> String {
        let mut s = format!("cur={} edges=", self.current);
        for w in &self.edges {
            let _ = write!(s, "{w:016x}");
        }
        let _ = write!(s, " boxes={:?}", &self.boxes[..self.players]);
        s
    }

    fn describe(&self, action: Action) -> String {
        let e = action.0 as usize;
        if e < self.horizontal_count() {
            format!("h{},{}", e / (self.cols - 1), e % (self.cols - 1))
        } else {
            let v = e - self.horizontal_count();
            format!("v{},{}", v / self.cols, v % self.cols)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn three_by_three_dots_has_twelve_edges() {
        let g = DotsAndBoxes::new(2, 3, 3).unwrap();
        assert_eq!(g.legal_actions().len(), 2 * 3 + 2 * 3);
        assert_eq!(g.box_count(), 4);
        let g = DotsAndBoxes::new(2, 9, 9).unwrap();
        assert_eq!(g.edge_count(), 144);
        assert_eq!(g.box_count(), 64);
    }

    #[test]
    fn fourth_edge_scores_and_keeps_the_turn() {
        let mut rng = stream(0, &[]);
        let mut g = DotsAndBoxes::new(2, 3, 3).unwrap();
        let [top, bottom, left, right] = g.box_edges(0, 0);
        for e in [top, bottom, left] {
            g.apply_unchecked(Action(e as u32), &mut rng);
        }
        // three non-scoring moves alternate 0 -> 1 -> 0 -> 1
        assert_eq!(g.current_player(), 1);
        g.apply_unchecked(Action(right as u32), &mut rng);
        assert_eq!(g.boxes_owned(1), 1);
        assert_eq!(g.current_player(), 1);
        assert_eq!(g.box_owner(0), Some(1));
        assert!((g.progress_score(1) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(DotsAndBoxes::new(2, 1, 5).is_err());
        assert!(DotsAndBoxes::new(2, 20, 20).is_err());
        assert!(DotsAndBoxes::new(5, 3, 3).is_err());
    }
}
