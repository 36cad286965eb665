"""Heavy-tailed CTRWs realized as time-changed finite-mean walks."""
