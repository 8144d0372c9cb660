export interface SessionInfo {
  session_id: string;
  image_count: number;
}

export interface HealthInfo {
  status: string;
  checkpoint_loaded: boolean;
  image_size: number | null;
  max_steps: number | null;
}

export interface StudioRequest {
  prompt: string;
  steps: number;
  n: number;
  seed: number | null;
}

export interface JobResult {
  job_id: string;
  status: string;
  images: string[]; // base64 PNG payloads
  warnings: string[];
  request: StudioRequest;
}

export interface GroupStats {
  group: string;
  mean: number;
  std: number;
  min: number;
  max: number;
  median: number;
  n: number;
}

export interface StatsResponse {
  real: GroupStats;
  generated: GroupStats;
  welch_t: { t: number; df: number; p: number };
  n_sessions: number;
  n_ratings: number;
}
