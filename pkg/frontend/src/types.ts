/** Payload shapes of the /v1 benchmarking API. */

export interface ForceBar {
  feature: string;
  value: number;
  phi: number;
}

export interface ForceData {
  base_value: number;
  output_value: number;
  positive: ForceBar[];
  negative: ForceBar[];
}

export interface ExplanationBody {
  base_value: number;
  phi: number[];
  feature_names: string[];
  feature_values: number[];
  prediction: number;
}

export interface ScoreResult {
  score: number;
  eer: number;
  predicted: number;
  certified: boolean;
}

export interface WhatIfSide extends ScoreResult {
  force: ForceData;
  explanation: ExplanationBody;
}

export interface WhatIfResponse {
  baseline: WhatIfSide;
  modified: WhatIfSide;
  delta_score: number;
}

export interface FeatureSchemaRow {
  name: string;
  kind: 'numeric' | 'boolean' | 'categorical';
  role: 'predictor' | 'target';
  levels?: string[];
}

export interface ModelSummary {
  model_id: string;
  peer_group: string;
  kind: string;
  target: string;
}

export interface ModelEntry extends ModelSummary {
  feature_schema: FeatureSchemaRow[];
}

export interface ApiErrorBody {
  code: string;
  message: string;
  details: { fields?: { field: string; error: string }[] } & Record<string, unknown>;
}
