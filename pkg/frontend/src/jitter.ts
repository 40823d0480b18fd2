/** Audio jitter buffer: absorbs network timing, never invents samples.
 *
 * Chunks queue as they arrive; playback starts once the prebuffer is
 * full. An underrun plays silence and re-enters the buffering state
 * rather than stretching or repeating audio.
 */

export class JitterBuffer {
  readonly sampleRate: number;
  private readonly prebufferSamples: number;
  private chunks: Int16Array[] = [];
  private offset = 0;          // consumed samples of chunks[0]
  private queued = 0;          // total queued samples
  private buffering = true;
  private lastSeq = -1;
  underruns = 0;

  constructor(sampleRate: number, prebufferMs = 100) {
    this.sampleRate = sampleRate;
    this.prebufferSamples = Math.round((sampleRate * prebufferMs) / 1000);
  }

  /** Queue one PCM chunk; stale or duplicate seq values drop. */
  push(seq: number, samples: Int16Array): void {
    if (seq <= this.lastSeq) return;
    this.lastSeq = seq;
    if (samples.length === 0) return;
    this.chunks.push(samples);
    this.queued += samples.length;
    if (this.buffering && this.queued >= this.prebufferSamples) {
      this.buffering = false;
    }
  }

  /** Fill `out` with float samples in [-1, 1]; silence while buffering
   * or when the queue runs dry mid-read. */
  pull(out: Float32Array): void {
    let i = 0;
    if (this.buffering) {
      out.fill(0);
      return;
    }
    while (i < out.length && this.chunks.length > 0) {
      const head = this.chunks[0];
      const take = Math.min(out.length - i, head.length - this.offset);
      for (let k = 0; k < take; k++) {
        out[i + k] = head[this.offset + k] / 32768;
      }
      i += take;
      this.offset += take;
      this.queued -= take;
      if (this.offset === head.length) {
        this.chunks.shift();
        this.offset = 0;
      }
    }
    if (i < out.length) {
      out.fill(0, i);
      this.underruns += 1;
      this.buffering = true;
    }
  }

  get queuedSamples(): number {
    return this.queued;
  }

  get fillMs(): number {
    return (this.queued / this.sampleRate) * 1000;
  }

  get isBuffering(): boolean {
    return this.buffering;
  }
}
