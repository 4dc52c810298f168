@problemName tiny
@dimensions 2
@seriesLength 4
@classLabel true down up
@data
0,1,2,3:3,2,1,0:up
3,2,1,0:0,1,2,3:down
5,5,5,5:1,1,1,1:down
