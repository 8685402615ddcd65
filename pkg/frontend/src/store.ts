/** Review-session state.
 *
 * The store never mutates annotations locally: every change round-trips
 * through the edits endpoint and the displayed state always equals a
 * server-acknowledged version. A stale expected version surfaces as a
 * conflict banner; the drawn input of the pending tool is preserved so the
 * reviewer can re-apply it after reloading.
 */

import { ApiClient, SignedOffError, VersionConflictError } from "./api.js";
import type { Annotation, AnnotationSet, EditOp, JobStatus, ToolName } from "./types.js";

export interface OverlayToggles {
  masks: boolean;
  boxes: boolean;
  labels: boolean;
}

export interface ConflictBanner {
  message: string;
  /** the edit that was rejected, kept so the drawing is not lost */
  pendingEdit: EditOp;
}

export interface ViewState {
  imageId: string | null;
  job: JobStatus | null;
  set: AnnotationSet | null;
  /** the version currently displayed (== set.version) */
  version: number;
  selected: number[];
  overlays: OverlayToggles;
  activeTool: ToolName | null;
  conflict: ConflictBanner | null;
  signedOff: boolean;
  notFound: boolean;
  iscn: { text: string; uncertain: boolean } | null;
  karyogramGroups: { name: string; member_ids: number[] }[];
}

export type Listener = (state: ViewState) => void;

function initialState(): ViewState {
  return {
    imageId: null,
    job: null,
    set: null,
    version: 0,
    selected: [],
    overlays: { masks: true, boxes: true, labels: true },
    activeTool: null,
    conflict: null,
    signedOff: false,
    notFound: false,
    iscn: null,
    karyogramGroups: [],
  };
}

export class ReviewStore {
  private state: ViewState = initialState();
  private listeners: Listener[] = [];

  constructor(private api: ApiClient, private actor?: string) {}

  getState(): ViewState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private setState(patch: Partial<ViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  /** Stage statuses that degraded, for the badge row. */
  degradedStages(): string[] {
    const statuses = this.state.job?.stage_statuses ?? [];
    return statuses.filter((s) => s.outcome === "Degraded").map((s) => s.stage);
  }

  /** True when every edit tool must be disabled. */
  toolsDisabled(): boolean {
    return this.state.signedOff || this.state.set === null;
  }

  async loadJob(jobId: string): Promise<void> {
    try {
      const job = await this.api.getJob(jobId);
      this.setState({ job, notFound: false });
      if (job.state === "Done" || job.state === "Partial") {
        await this.loadImage(job.image_id);
      }
    } catch (error) {
      if (isNotFound(error)) {
        this.setState({ ...initialState(), notFound: true });
        return;
      }
      throw error;
    }
  }

  async loadImage(imageId: string): Promise<void> {
    try {
      const set = await this.api.getAnnotations(imageId);
      this.setState({
        imageId,
        set,
        version: set.version,
        signedOff: set.signed_off,
        selected: [],
        conflict: null,
        notFound: false,
      });
      await this.refreshPanels();
    } catch (error) {
      if (isNotFound(error)) {
        this.setState({ ...initialState(), notFound: true });
        return;
      }
      throw error;
    }
  }

  /** Version slider: render exactly the server's snapshot of version v. */
  async showVersion(version: number): Promise<void> {
    if (!this.state.imageId) return;
    const set = await this.api.getAnnotations(this.state.imageId, version);
    this.setState({ set, version: set.version, selected: [] });
    await this.refreshPanels(version);
  }

  select(ids: number[]): void {
    this.setState({ selected: ids });
  }

  setTool(tool: ToolName | null): void {
    if (tool !== null && this.toolsDisabled()) return;
    this.setState({ activeTool: tool });
  }

  toggleOverlay(key: keyof OverlayToggles): void {
    const overlays = { ...this.state.overlays, [key]: !this.state.overlays[key] };
    this.setState({ overlays });
  }

  annotationById(id: number): Annotation | undefined {
    return this.state.set?.annotations.find((a) => a.id === id);
  }

  /** POST one edit with the displayed version as the optimistic guard. */
  async applyEdit(edit: EditOp): Promise<boolean> {
    if (!this.state.imageId || this.state.set === null) return false;
    if (this.state.signedOff) return false;
    const imageId = this.state.imageId;
    try {
      const response = await this.api.postEdit(
        imageId, edit, this.state.version, this.actor);
      // advance to the acknowledged version; the annotation list in the
      // response is the server's, not a local mutation
      const set: AnnotationSet = {
        ...this.state.set,
        version: response.version,
        latest_version: response.version,
        annotations: response.annotations,
      };
      this.setState({ set, version: response.version, conflict: null, selected: [] });
      await this.refreshPanels();
      return true;
    } catch (error) {
      if (error instanceof VersionConflictError) {
        this.setState({
          conflict: {
            message: "Someone else edited this image. Reload to continue; " +
                     "your drawing is preserved.",
            pendingEdit: edit,
          },
        });
        return false;
      }
      if (error instanceof SignedOffError) {
        this.setState({ signedOff: true, activeTool: null });
        return false;
      }
      throw error;
    }
  }

  /** Reload after a conflict; returns the preserved edit for re-application. */
  async reloadAfterConflict(): Promise<EditOp | null> {
    const pending = this.state.conflict?.pendingEdit ?? null;
    if (this.state.imageId) {
      await this.loadImage(this.state.imageId);
    }
    return pending;
  }

  async signOff(): Promise<void> {
    if (!this.state.imageId) return;
    await this.api.signOff(this.state.imageId, this.actor);
    this.setState({ signedOff: true, activeTool: null });
  }

  async refreshPanels(version?: number): Promise<void> {
    if (!this.state.imageId) return;
    const iscn = await this.api.getIscn(this.state.imageId, version);
    const karyogram = await this.api.getKaryogram(this.state.imageId, version);
    this.setState({
      iscn: { text: iscn.iscn, uncertain: iscn.uncertain },
      karyogramGroups: karyogram.groups,
    });
  }
}

function isNotFound(error: unknown): boolean {
  return typeof error === "object" && error !== null &&
    (error as { status?: number }).status === 404;
}
