use super::{Grid, PowerFlowResult};

/// Advances the overflow counters and trips lines that stayed overloaded for
/// `max_overflow_steps` consecutive solves. Tripped lines start a cooldown of
/// `cooldown` steps. Returns the ids of the lines tripped by this call.
pub fn apply_overflow_protection(
    grid: &mut Grid,
    result: &PowerFlowResult,
    max_overflow_steps: u32,
    cooldown: u32,
) -> Vec<usize> {
    let mut tripped = Vec::new();
    for l in 0..grid.n_lines() {
        if !grid.lines[l].status {
            grid.lines[l].timestep_overflow = 0;
            continue;
        }
        if result.line_loading[l] > 1.0 {
            grid.lines[l].timestep_overflow += 1;
            if grid.lines[l].timestep_overflow >= max_overflow_steps {
                grid.disconnect_line(l);
                grid.lines[l].cooldown_remaining = cooldown;
                tripped.push(l);
            }
        } else {
            grid.lines[l].timestep_overflow = 0;
        }
    }
    tripped
}
