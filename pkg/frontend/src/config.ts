/**
 * Client-side mirror of the engine's edit configuration. The bounds here are
 * the contract the server enforces; controls clamp/reject on the same rules
 * so a request that leaves this module never 422s on range errors.
 */

export interface EditConfig {
  steps: number;
  guidance_scale: number;
  align_fraction: number;
  blend_ratio: number;
  preservation_window: number;
  turns: number;
}

export const DEFAULT_CONFIG: EditConfig = {
  steps: 50,
  guidance_scale: 7.5,
  align_fraction: 0.2,
  blend_ratio: 0.1,
  preservation_window: 5,
  turns: 1,
};

export interface FieldBound {
  min: number;
  max: number | ((config: EditConfig) => number);
  integer: boolean;
}

export const BOUNDS: Record<keyof EditConfig, FieldBound> = {
  steps: { min: 1, max: 1000, integer: true },
  guidance_scale: { min: 1e-6, max: 100, integer: false },
  align_fraction: { min: 0, max: 1, integer: false },
  blend_ratio: { min: 0, max: 1, integer: false },
  preservation_window: { min: 0, max: (c) => c.steps, integer: true },
  turns: { min: 1, max: 100, integer: true },
};

export interface ValidationProblem {
  field: keyof EditConfig;
  message: string;
}

export function boundFor(field: keyof EditConfig, config: EditConfig): { min: number; max: number } {
  const bound = BOUNDS[field];
  const max = typeof bound.max === "function" ? bound.max(config) : bound.max;
  return { min: bound.min, max };
}

export function validateField(
  field: keyof EditConfig,
  value: number,
  config: EditConfig,
): ValidationProblem | null {
  const bound = BOUNDS[field];
  const { min, max } = boundFor(field, config);
  if (Number.isNaN(value)) {
    return { field, message: `${field} must be a number` };
  }
  if (bound.integer && !Number.isInteger(value)) {
    return { field, message: `${field} must be an integer` };
  }
  if (value < min || value > max) {
    return { field, message: `${field} must be in [${min}, ${max}], got ${value}` };
  }
  return null;
}

export function validateConfig(config: EditConfig): ValidationProblem[] {
  const problems: ValidationProblem[] = [];
  for (const field of Object.keys(BOUNDS) as (keyof EditConfig)[]) {
    const problem = validateField(field, config[field], config);
    if (problem) problems.push(problem);
  }
  return problems;
}

/** Applies a single field edit, returning the updated config or the refusal. */
export function applyOverride(
  config: EditConfig,
  field: keyof EditConfig,
  value: number,
): { config: EditConfig } | { problem: ValidationProblem } {
  const candidate = { ...config, [field]: value };
  const problem =
    validateField(field, value, candidate) ??
    // a steps change can strand the preservation window above its cap
    validateField("preservation_window", candidate.preservation_window, candidate);
  if (problem) return { problem };
  return { config: candidate };
}
