//! Ring-buffer replay memory with per-task index lists.

use rand::Rng;

use crate::taskworld::Transition;

/// When full, new transitions overwrite the oldest ones. Each task keeps an
/// index list of its live entries so batches can be drawn per task.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    write: usize,
    per_task: Vec<Vec<usize>>,
    /// Position of each entry inside its task's index list.
    pos_in_task: Vec<usize>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, num_tasks: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            data: Vec::with_capacity(capacity.min(1 << 16)),
            write: 0,
            per_task: vec![Vec::new(); num_tasks],
            pos_in_task: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn num_tasks(&self) -> usize {
        self.per_task.len()
    }

    pub fn task_len(&self, task: usize) -> usize {
        self.per_task.get(task).map_or(0, Vec::len)
    }

    pub fn task_indices(&self, task: usize) -> &[usize] {
        &self.per_task[task]
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.data[idx]
    }

    pub fn push(&mut self, t: Transition) {
        let task = t.task_id;
        assert!(task < self.per_task.len(), "task id {task} out of range");
        if self.data.len() < self.capacity {
            let idx = self.data.len();
            self.data.push(t);
            self.pos_in_task.push(self.per_task[task].len());
            self.per_task[task].push(idx);
        } else {
            let idx = self.write;
            self.write = (self.write + 1) % self.capacity;
            let old_task = self.data[idx].task_id;
            // swap-remove idx from the old task's list
            let pos = self.pos_in_task[idx];
            let list = &mut self.per_task[old_task];
            let last = *list.last().expect("live entry is indexed");
            list.swap_remove(pos);
            if last != idx {
                self.pos_in_task[last] = pos;
            }
            self.data[idx] = t;
            self.pos_in_task[idx] = self.per_task[task].len();
            self.per_task[task].push(idx);
        }
    }

    /// `batch` indices of `task`'s transitions, uniform with replacement.
    /// `None` when the task has no data.
    pub fn sample_task<R: Rng + ?Sized>(&self, task: usize, batch: usize, rng: &mut R) -> Option<Vec<usize>> {
        let list = self.per_task.get(task)?;
        if list.is_empty() {
            return None;
        }
        Some((0..batch).map(|_| list[rng.random_range(0..list.len())]).collect())
    }
}
