/** WAV playback via the browser's native audio element. */

export interface PlaybackHandle {
  stop(): void;
  done: Promise<void>;
}

export function wavBase64ToBlob(b64: string): Blob {
  const raw = atob(b64);
  const bytes = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i += 1) bytes[i] = raw.charCodeAt(i);
  return new Blob([bytes], { type: "audio/wav" });
}

export function playWavBase64(
  b64: string,
  onStateChange?: (playing: boolean) => void,
): PlaybackHandle {
  const url = URL.createObjectURL(wavBase64ToBlob(b64));
  const audio = new Audio(url);
  let resolveDone: () => void = () => undefined;
  const done = new Promise<void>((resolve) => {
    resolveDone = resolve;
  });
  const finish = () => {
    URL.revokeObjectURL(url);
    onStateChange?.(false);
    resolveDone();
  };
  audio.addEventListener("ended", finish, { once: true });
  audio.addEventListener("error", finish, { once: true });
  onStateChange?.(true);
  void audio.play().catch(finish);
  return {
    stop() {
      audio.pause();
      finish();
    },
    done,
  };
}
