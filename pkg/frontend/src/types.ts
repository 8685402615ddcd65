/** Wire types mirroring the backend REST schemas. */

export type ClassLabel = string; // "1".."22" | "X" | "Y" | "Unknown"

export interface Rotation {
  sin: number;
  cos: number;
}

export interface Annotation {
  id: number;
  polygon: [number, number][];
  class: ClassLabel;
  probs: number[];
  rotation: Rotation;
  score: number;
}

export interface AnnotationSet {
  image_id: string;
  version: number;
  latest_version: number;
  signed_off: boolean;
  canvas: { width: number; height: number };
  annotations: Annotation[];
  next_annotation_id: number;
}

export interface StageStatus {
  stage: string;
  outcome: "Ok" | "Degraded" | "Failed";
  latency_ms: number;
  detail: string;
}

export interface JobStatus {
  job_id: string;
  image_id: string;
  state: "Queued" | "Running" | "Done" | "Partial" | "Failed";
  attempts: number;
  error: string | null;
  stage_statuses: StageStatus[] | null;
  annotation_count: number | null;
}

export interface AuditEvent {
  event_id: number;
  actor: string;
  at: number;
  edit: Record<string, unknown>;
  resulting_version: number;
}

export interface IscnSuggestion {
  iscn: string;
  uncertain: boolean;
  version: number;
}

export interface KaryogramGroups {
  /** nine rows in display order with member annotation ids */
  groups: { name: string; member_ids: number[] }[];
  /** PNG bytes of the composed karyogram */
  png: Blob;
}

export type EditOp =
  | { op: "delete"; id: number }
  | { op: "merge"; ids: number[]; class?: ClassLabel }
  | { op: "split"; id: number; polygon_a: [number, number][]; polygon_b: [number, number][] }
  | { op: "redraw"; id: number; polygon: [number, number][] }
  | { op: "reclassify"; id: number; class: ClassLabel }
  | { op: "rotate"; id: number; degrees: number }
  | { op: "flip"; id: number };

export type ToolName = EditOp["op"];

export const KARYOGRAM_GROUP_NAMES = [
  "1-3", "4-5", "6-12", "13-15", "16-18", "19-22", "X", "Y", "Unknown",
] as const;

export const CLASS_LABELS: ClassLabel[] = [
  ...Array.from({ length: 22 }, (_, i) => String(i + 1)), "X", "Y",
];
