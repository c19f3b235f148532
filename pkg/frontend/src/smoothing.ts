// Exponential smoothing of the displayed probability bars:
// smoothed <- alpha * p + (1 - alpha) * smoothed.

export class ProbSmoother {
  private smoothed: number[] | null = null;

  constructor(
    private readonly alpha: number,
    private readonly enabled: boolean = true
  ) {
    if (!(alpha > 0 && alpha <= 1)) throw new Error("alpha must be in (0, 1]");
  }

  update(probs: number[]): number[] {
    if (!this.enabled) return probs.slice();
    if (this.smoothed === null || this.smoothed.length !== probs.length) {
      this.smoothed = probs.slice();
    } else {
      for (let i = 0; i < probs.length; i++) {
        this.smoothed[i] = this.alpha * probs[i] + (1 - this.alpha) * this.smoothed[i];
      }
    }
    return this.smoothed.slice();
  }

  reset(): void {
    this.smoothed = null;
  }
}
