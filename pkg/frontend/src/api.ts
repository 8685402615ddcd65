/** Typed client for the backend REST API.
 *
 * Every mutation carries an expected version; a 409 from the server becomes
 * a VersionConflictError so the UI can show the reload banner instead of
 * retrying silently. Foreign-tenant and missing resources surface as
 * NotFoundError (the server does not distinguish them).
 */

import type {
  Annotation,
  AnnotationSet,
  AuditEvent,
  EditOp,
  IscnSuggestion,
  JobStatus,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class NotFoundError extends ApiError {
  constructor(message: string) {
    super(404, message);
  }
}

export class VersionConflictError extends ApiError {
  constructor(message: string) {
    super(409, message);
  }
}

export class SignedOffError extends ApiError {
  constructor(message: string) {
    super(423, message);
  }
}

export interface EditResponse {
  version: number;
  event_id: number;
  annotations: Annotation[];
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private token: string,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request(path: string, init: RequestInit = {}): Promise<Response> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      ...init,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(init.body ? { "Content-Type": "application/json" } : {}),
        ...(init.headers ?? {}),
      },
    });
    if (response.ok) return response;
    const detail = await response.text().catch(() => "");
    if (response.status === 404) throw new NotFoundError(detail);
    if (response.status === 409) throw new VersionConflictError(detail);
    if (response.status === 423) throw new SignedOffError(detail);
    throw new ApiError(response.status, detail);
  }

  async getJob(jobId: string): Promise<JobStatus> {
    const r = await this.request(`/v1/jobs/${jobId}`);
    return (await r.json()) as JobStatus;
  }

  async getAnnotations(imageId: string, version?: number): Promise<AnnotationSet> {
    const query = version === undefined ? "" : `?version=${version}`;
    const r = await this.request(`/v1/images/${imageId}/annotations${query}`);
    return (await r.json()) as AnnotationSet;
  }

  async postEdit(imageId: string, edit: EditOp, expectedVersion: number,
                 actor?: string): Promise<EditResponse> {
    const r = await this.request(`/v1/images/${imageId}/edits`, {
      method: "POST",
      body: JSON.stringify({ edit, expected_version: expectedVersion, actor }),
    });
    return (await r.json()) as EditResponse;
  }

  async getAudit(imageId: string): Promise<AuditEvent[]> {
    const r = await this.request(`/v1/images/${imageId}/audit`);
    const body = (await r.json()) as { events: AuditEvent[] };
    return body.events;
  }

  async signOff(imageId: string, actor?: string): Promise<{ signed_off_version: number }> {
    const r = await this.request(`/v1/images/${imageId}/signoff`, {
      method: "POST",
      body: JSON.stringify({ actor }),
    });
    return (await r.json()) as { signed_off_version: number };
  }

  async getIscn(imageId: string, version?: number): Promise<IscnSuggestion> {
    const query = version === undefined ? "" : `?version=${version}`;
    const r = await this.request(`/v1/images/${imageId}/iscn${query}`);
    return (await r.json()) as IscnSuggestion;
  }

  async getKaryogram(imageId: string, version?: number):
      Promise<{ png: Blob; groups: { name: string; member_ids: number[] }[] }> {
    const query = version === undefined ? "" : `?version=${version}`;
    const r = await this.request(`/v1/images/${imageId}/karyogram${query}`);
    const header = r.headers.get("X-Karyogram-Groups") ?? "[]";
    return { png: await r.blob(), groups: JSON.parse(header) };
  }

  async getRasterPng(imageId: string): Promise<Blob> {
    const r = await this.request(`/v1/images/${imageId}/raster`);
    return r.blob();
  }
}
